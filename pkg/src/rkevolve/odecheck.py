"""Empirical order verification by integrating test problems.

Independent of the algebraic residual machinery: a method certified to
order q must show a local truncation error of O(h^(q+1)) and a global
error of O(h^q) on smooth problems.  Slopes are fitted by least squares
on log error against log step size over a dyadic ladder of steps, with
levels that hit the rounding floor dropped from the fit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tableau import ButcherTableau

ROUNDING_FLOOR = 1e-13          # relative error floor excluded from slope fits
IMPLICIT_TOL = 1e-14
IMPLICIT_MAX_ITER = 200


class StageIterationError(RuntimeError):
    """Implicit stage equations failed to contract."""


@dataclass(frozen=True)
class TestProblem:
    """Autonomous initial-value problem with a closed-form solution."""

    name: str
    dim: int
    g: Callable[[np.ndarray], np.ndarray]
    y0: np.ndarray
    t_end: float
    exact: Callable[[float], np.ndarray] | None = None


def _problems() -> dict[str, TestProblem]:
    return {
        "linear": TestProblem(
            name="linear", dim=1,
            g=lambda y: y,
            y0=np.array([1.0]), t_end=1.0,
            exact=lambda t: np.array([np.exp(t)])),
        "decay": TestProblem(
            name="decay", dim=1,
            g=lambda y: -y,
            y0=np.array([1.0]), t_end=2.0,
            exact=lambda t: np.array([np.exp(-t)])),
        "logistic": TestProblem(
            name="logistic", dim=1,
            g=lambda y: y * (1.0 - y),
            y0=np.array([0.1]), t_end=4.0,
            exact=lambda t: np.array([1.0 / (1.0 + 9.0 * np.exp(-t))])),
        "quadratic": TestProblem(
            name="quadratic", dim=1,
            g=lambda y: y * y,
            y0=np.array([1.0]), t_end=0.5,
            exact=lambda t: np.array([1.0 / (1.0 - t)])),
        "oscillator": TestProblem(
            name="oscillator", dim=2,
            g=lambda y: np.array([y[1], -y[0]]),
            y0=np.array([1.0, 0.0]), t_end=2.0,
            exact=lambda t: np.array([np.cos(t), -np.sin(t)])),
    }


PROBLEMS = _problems()


def rk_step(t: ButcherTableau, g, y: np.ndarray, h: float) -> np.ndarray:
    """Advance one step; implicit stages use damped fixed-point iteration."""
    y = np.asarray(y, dtype=float)
    s = t.stages
    if t.explicit:
        k = np.empty((s,) + y.shape)
        for i in range(s):
            acc = y.copy()
            for j in range(i):
                if t.a[i, j] != 0.0:
                    acc = acc + (h * t.a[i, j]) * k[j]
            k[i] = g(acc)
        return y + h * np.tensordot(t.w, k, axes=1)
    k = np.tile(np.asarray(g(y), dtype=float), (s, 1)).reshape((s,) + y.shape)
    damping = 1.0
    prev_delta = np.inf
    for _ in range(IMPLICIT_MAX_ITER):
        target = np.array([g(y + h * np.tensordot(t.a[i], k, axes=1))
                           for i in range(s)])
        new_k = (1.0 - damping) * k + damping * target
        delta = float(np.max(np.abs(new_k - k)))
        k = new_k
        if delta <= IMPLICIT_TOL * max(1.0, float(np.max(np.abs(k)))):
            return y + h * np.tensordot(t.w, k, axes=1)
        if delta > prev_delta:
            damping = 0.5
        prev_delta = delta
    raise StageIterationError(
        f"implicit stages did not converge within {IMPLICIT_MAX_ITER} iterations "
        f"(h={h})")


def integrate(t: ButcherTableau, problem: TestProblem, n_steps: int) -> np.ndarray:
    """Fixed-step integration from 0 to the problem horizon."""
    h = problem.t_end / n_steps
    y = problem.y0.copy()
    for _ in range(n_steps):
        y = rk_step(t, problem.g, y, h)
    return y


@dataclass(frozen=True)
class OrderEstimate:
    """Least-squares slope of log error against log step size."""

    kind: str                      # "local" or "global"
    step_sizes: tuple[float, ...]
    errors: tuple[float, ...]
    slope: float
    fit_residual: float            # max |log-error fit deviation|
    dropped: tuple[int, ...]       # levels excluded (rounding floor)


def _fit(kind: str, hs: list[float], errors: list[float],
         scale: float) -> OrderEstimate:
    floor = ROUNDING_FLOOR * max(scale, 1.0)
    dropped = tuple(i for i, e in enumerate(errors) if e < floor)
    used = [i for i in range(len(hs)) if i not in dropped]
    if len(used) < 2:
        raise ValueError(
            "all error levels sit at the rounding floor; increase the base step")
    log_h = np.log([hs[i] for i in used])
    log_e = np.log([errors[i] for i in used])
    slope, intercept = np.polyfit(log_h, log_e, 1)
    resid = float(np.max(np.abs(log_e - (slope * log_h + intercept))))
    return OrderEstimate(kind=kind, step_sizes=tuple(hs), errors=tuple(errors),
                         slope=float(slope), fit_residual=resid, dropped=dropped)


def local_order(t: ButcherTableau, problem: TestProblem, h0: float = 0.1,
                levels: int = 6) -> OrderEstimate:
    """Slope of the one-step error; estimates (method order) + 1."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    if levels < 4:
        raise ValueError("at least 4 step sizes required")
    hs, errors = [], []
    for k in range(levels):
        h = h0 / 2 ** k
        y1 = rk_step(t, problem.g, problem.y0, h)
        err = float(np.linalg.norm(problem.exact(h) - y1))
        hs.append(h)
        errors.append(err)
    scale = float(np.linalg.norm(problem.exact(h0)))
    return _fit("local", hs, errors, scale)


def global_order(t: ButcherTableau, problem: TestProblem, h0: float = 0.1,
                 levels: int = 6) -> OrderEstimate:
    """Slope of the end-of-horizon error under step halving; estimates the order."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    if levels < 4:
        raise ValueError("at least 4 step sizes required")
    n0 = max(1, round(problem.t_end / h0))
    reference = problem.exact(problem.t_end)
    hs, errors = [], []
    for k in range(levels):
        n = n0 * 2 ** k
        y = integrate(t, problem, n)
        hs.append(problem.t_end / n)
        errors.append(float(np.linalg.norm(reference - y)))
    return _fit("global", hs, errors, float(np.linalg.norm(reference)))


def stability_coefficients(t: ButcherTableau, degree: int) -> np.ndarray:
    """Taylor coefficients of one explicit step applied to y' = y.

    Index k holds the h^k coefficient: 1, w.1, w.A.1, w.A^2.1, ...; a
    method of order q matches 1/k! through k = q.
    """
    if not t.explicit:
        raise ValueError("stability coefficients require an explicit tableau")
    coeffs = np.zeros(degree + 1)
    coeffs[0] = 1.0
    vec = np.ones(t.stages)
    for k in range(1, degree + 1):
        coeffs[k] = float(t.w @ vec)
        vec = t.a @ vec
    return coeffs
