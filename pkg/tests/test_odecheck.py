import math

import numpy as np
import pytest

from rkevolve.conditions import is_feasible_to_order
from rkevolve.odecheck import (PROBLEMS, StageIterationError, global_order,
                               integrate, local_order, rk_step,
                               stability_coefficients)
from rkevolve.tableau import (ButcherTableau, classical_rk4, euler,
                              load_fixture, midpoint)


def test_euler_step():
    y1 = rk_step(euler(), lambda y: y, np.array([1.0]), 0.1)
    assert y1[0] == pytest.approx(1.1, abs=1e-16)


def test_rk4_linear_step_equals_quartic_taylor():
    h = 0.5
    y1 = rk_step(classical_rk4(), lambda y: y, np.array([1.0]), h)
    taylor = 1 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24
    assert abs(y1[0] - taylor) < 1e-15


def test_zero_step_is_identity():
    y = np.array([2.5, -1.0])
    out = rk_step(classical_rk4(), lambda y: np.array([y[1], -y[0]]), y, 0.0)
    assert np.array_equal(out, y)


def test_exact_solutions_satisfy_ode():
    # finite-difference spot check of every registered problem at t = 0
    eps = 1e-7
    for problem in PROBLEMS.values():
        slope_fd = (problem.exact(eps) - problem.exact(-eps)) / (2 * eps)
        assert np.allclose(slope_fd, problem.g(problem.y0), atol=1e-6), \
            problem.name


def test_rk4_local_slope_linear():
    est = local_order(classical_rk4(), PROBLEMS["linear"], h0=0.5, levels=6)
    assert 4.8 <= est.slope <= 5.2


def test_midpoint_local_slope():
    est = local_order(midpoint(), PROBLEMS["linear"], h0=0.5, levels=6)
    assert 2.7 <= est.slope <= 3.3


def test_rk4_global_slope_decay():
    est = global_order(classical_rk4(), PROBLEMS["decay"], h0=0.1, levels=5)
    assert 3.8 <= est.slope <= 4.2


def test_euler_global_slope():
    est = global_order(euler(), PROBLEMS["decay"], h0=0.1, levels=6)
    assert 0.9 <= est.slope <= 1.1


def test_fixture_local_slope_quadratic():
    est = local_order(load_fixture("ev44_1"), PROBLEMS["quadratic"],
                      h0=0.1, levels=6)
    assert 4.7 <= est.slope <= 5.3


def test_fixture_global_slope_quadratic():
    est = global_order(load_fixture("ev33_1"), PROBLEMS["quadratic"],
                       h0=0.05, levels=6)
    assert 2.8 <= est.slope <= 3.2


def test_rounding_floor_levels_dropped():
    est = local_order(classical_rk4(), PROBLEMS["linear"], h0=0.1, levels=6)
    assert est.dropped                      # deep levels fall below the floor
    assert 4.5 <= est.slope <= 5.5


def test_all_levels_at_floor_is_an_error():
    with pytest.raises(ValueError):
        local_order(classical_rk4(), PROBLEMS["linear"], h0=1e-4, levels=4)


def test_minimum_levels_required():
    with pytest.raises(ValueError):
        local_order(classical_rk4(), PROBLEMS["linear"], levels=3)


def test_implicit_midpoint_second_order():
    imp = ButcherTableau(stages=1, a=np.array([[0.5]]), w=np.array([1.0]),
                         explicit=False)
    est = global_order(imp, PROBLEMS["decay"], h0=0.1, levels=5)
    assert 1.8 <= est.slope <= 2.2


def test_implicit_nonconvergence_raises():
    # contraction needs |h * a * dg/dy| < 1; violate it on purpose
    imp = ButcherTableau(stages=1, a=np.array([[50.0]]), w=np.array([1.0]),
                         explicit=False)
    with pytest.raises(StageIterationError):
        rk_step(imp, lambda y: -y, np.array([1.0]), 1.0)


def test_integrate_step_count():
    y = integrate(euler(), PROBLEMS["linear"], 100)
    assert abs(y[0] - np.exp(1.0)) < 0.02


def test_stability_coefficients_rk4():
    coeffs = stability_coefficients(classical_rk4(), 6)
    expected = [1.0, 1.0, 0.5, 1 / 6, 1 / 24, 0.0, 0.0]
    assert np.allclose(coeffs, expected, rtol=0, atol=1e-15)


def test_stability_coefficients_requires_explicit():
    imp = ButcherTableau(stages=1, a=np.array([[0.5]]), w=np.array([1.0]),
                         explicit=False)
    with pytest.raises(ValueError):
        stability_coefficients(imp, 3)


def test_consistent_methods_have_positive_slope():
    for t in (euler(), midpoint(), classical_rk4()):
        assert abs(float(t.w.sum()) - 1.0) < 1e-12
        est = global_order(t, PROBLEMS["logistic"], h0=0.1, levels=5)
        assert est.slope >= 0.9


@pytest.mark.parametrize("name,certified,problem,h0", [
    ("euler", 1, "linear", 0.2),
    ("midpoint", 2, "linear", 0.5),
    ("ev33_1", 3, "quadratic", 0.2),
    ("ev44_1", 4, "quadratic", 0.1),
    ("rk4", 4, "linear", 0.5),
])
def test_certified_order_matches_empirical_slope(name, certified, problem, h0):
    t = load_fixture(name)
    # the largest q that passes the residual check at a truncation-proof tol
    algebraic = max(q for q in range(1, 7)
                    if is_feasible_to_order(t, q, thresholds=1e-12).feasible)
    assert algebraic == certified
    est = local_order(t, PROBLEMS[problem], h0=h0, levels=6)
    assert round(est.slope) - 1 == certified


def test_stability_matches_certified_order():
    # an order-q explicit method reproduces 1/k! through k = q on y' = y
    for name, order in (("rk4", 4), ("ev44_3", 4), ("ev33_2", 3), ("heun", 2)):
        t = load_fixture(name)
        coeffs = stability_coefficients(t, order)
        for k in range(order + 1):
            assert abs(coeffs[k] - 1.0 / math.factorial(k)) < 1e-12
