import math

import numpy as np
import pytest

from rkevolve.conditions import is_feasible_to_order
from rkevolve.es import ESConfig
from rkevolve.solver import (Archive, ArchiveRecord, StagedProblem, cycle,
                             dominates, evolve_runge_kutta, non_dominated,
                             pareto_front, read_archives, solve_staged,
                             tableau_of_record, write_archives)


def record(x, order=3, fitness=0.0, metrics=None):
    return ArchiveRecord(x=np.asarray(x, dtype=float), order=order,
                         metrics=metrics or {1: 0.0}, fitness=fitness,
                         generation=0, seed=0)


# ---------------------------------------------------------------------------
# dominance
# ---------------------------------------------------------------------------

def test_dominates_hand_built_pairs():
    assert dominates([1.0, 2.0], [2.0, 3.0])
    assert dominates([1.0, 2.0], [1.0, 3.0])
    assert not dominates([1.0, 2.0], [1.0, 2.0])
    assert not dominates([1.0, 4.0], [2.0, 3.0])
    assert not dominates([2.0, 3.0], [1.0, 4.0])


def test_non_dominated_filter():
    vectors = [[1.0, 5.0], [2.0, 2.0], [5.0, 1.0], [3.0, 3.0], [2.0, 2.0]]
    keep = non_dominated(vectors)
    assert keep == [0, 1, 2, 4]            # [3,3] dominated; duplicates survive


# ---------------------------------------------------------------------------
# generic staged solver
# ---------------------------------------------------------------------------

def toy_problem(**overrides):
    # circle intersected with the diagonal; minimize |x| over the solutions
    defaults = dict(
        dimension=2,
        generators=[lambda v: v[0] ** 2 + v[1] ** 2 - 1.0,
                    lambda v: v[0] - v[1]],
        tube_radii=[1e-8, 1e-8],
        final_objective=lambda v: abs(v[0]),
    )
    defaults.update(overrides)
    return StagedProblem(**defaults)


def test_default_even_split():
    p = StagedProblem(dimension=1,
                      generators=[lambda v: v[0]] * 6,
                      tube_radii=[1e-3, 1e-3, 1e-3])
    assert p.group_ends == [2, 4, 6]


def test_staged_toy_problem_finds_intersection():
    es = ESConfig(population=60, parents=30, max_iterations=4000, rng_seed=12,
                  stagnation_generations=200)
    result = solve_staged(toy_problem(), es)
    assert result.success
    assert all(stage.success for stage in result.stages)
    best = result.final_run.best_x
    target = np.array([math.sqrt(0.5), math.sqrt(0.5)])
    assert min(np.linalg.norm(best - target),
               np.linalg.norm(best + target)) < 1e-3
    assert abs(abs(best[0]) - math.sqrt(0.5)) < 1e-3


def test_staged_archive_points_lie_on_variety():
    es = ESConfig(population=50, parents=25, max_iterations=3000, rng_seed=3,
                  stagnation_generations=200)
    problem = toy_problem()
    result = solve_staged(problem, es)
    final_archive = result.stages[-1].archive
    assert final_archive
    for x in final_archive[:20]:
        assert abs(x[0] ** 2 + x[1] ** 2 - 1.0) < 1e-7
        assert abs(x[0] - x[1]) < 1e-7


def test_single_group_degenerates_to_one_run():
    problem = StagedProblem(dimension=2,
                            generators=[lambda v: v[0] ** 2 + v[1] ** 2 - 1.0],
                            tube_radii=[1e-8])
    es = ESConfig(population=40, parents=20, max_iterations=2000, rng_seed=5,
                  stagnation_generations=200)
    result = solve_staged(problem, es)
    assert result.success and len(result.stages) == 1
    assert result.final_run is None


def test_stage_failure_reported():
    # x^2 + 1 = 0 has no real solution: the first stage must fail
    problem = StagedProblem(dimension=1,
                            generators=[lambda v: v[0] ** 2 + 1.0],
                            tube_radii=[1e-8])
    es = ESConfig(population=20, parents=10, max_iterations=50, rng_seed=1,
                  stagnation_generations=30)
    result = solve_staged(problem, es)
    assert not result.success
    assert not result.stages[0].success


def test_hard_penalty_raises_objective():
    problem = toy_problem(hard_penalty=1e3)
    objective = problem.stage_objective(2)
    soft = toy_problem().stage_objective(2)
    off_variety = np.array([2.0, -1.0])     # violates the first tube
    assert objective(off_variety) > soft(off_variety)


# ---------------------------------------------------------------------------
# archives
# ---------------------------------------------------------------------------

def test_archive_dedup_and_cap():
    a = Archive(order=3, capacity=3)
    x = np.array([1.0, 2.0])
    assert a.add(record(x, fitness=0.5))
    assert not a.add(record(x, fitness=0.5))
    for k in range(5):
        a.add(record([float(k), 0.0], fitness=float(k)))
    assert len(a) == 3
    assert max(r.fitness for r in a.records) <= 1.0


def test_archive_roundtrip(tmp_path):
    a = Archive(order=2)
    a.add(record([0.25, -1.5, 3.0], order=2, fitness=1e-16,
                 metrics={1: 1e-17, 2: 2e-16}))
    b = Archive(order=3)
    b.add(record([1.0, 0.0, 0.5], order=3, fitness=2e-15,
                 metrics={1: 0.0, 2: 0.0, 3: 1e-15}))
    path = tmp_path / "arch.jsonl"
    write_archives({2: a, 3: b}, path)
    back = read_archives(path)
    assert sorted(back) == [2, 3]
    r = back[2].records[0]
    assert list(r.x) == [0.25, -1.5, 3.0]
    assert r.metrics == {1: 1e-17, 2: 2e-16}
    assert r.fitness == 1e-16


# ---------------------------------------------------------------------------
# Runge-Kutta cycles
# ---------------------------------------------------------------------------

DESK_ES = ESConfig(population=150, parents=75, max_iterations=2000,
                   rng_seed=71, stagnation_generations=250)


def test_cycle_archives_feasible_candidates():
    archives = {}
    new, result = cycle(stages=2, q=1, es=DESK_ES, restarts=1,
                        archives=archives)
    assert result.success and result.new_records == len(new) > 0
    for r in new.records[:10]:
        t = tableau_of_record(r, stages=2)
        assert bool(is_feasible_to_order(t, 2))


def test_evolve_two_stage_stops_at_order_two():
    # two explicit stages reach order 2 and never order 3
    es = ESConfig(population=150, parents=75, max_iterations=2000, rng_seed=8,
                  stagnation_generations=250)
    result = evolve_runge_kutta(stages=2, es=es, restarts=1)
    assert result.q_max == 2
    assert len(result.archives[2]) > 0
    assert len(result.archives.get(3, [])) == 0
    assert result.cycles[-1].success is False


def test_evolve_three_stage_desk_scale():
    es = ESConfig(population=200, parents=100, max_iterations=2500,
                  rng_seed=42, stagnation_generations=300)
    result = evolve_runge_kutta(stages=3, es=es, restarts=1)
    assert result.q_max == 3
    assert len(result.archives[3]) >= 1
    # archive soundness: fresh re-verification of every stored point
    for r in result.archives[3].records:
        t = tableau_of_record(r, stages=3)
        assert bool(is_feasible_to_order(t, 3))
        # monotone chain: order-3 feasible implies order-2 feasible
        assert bool(is_feasible_to_order(t, 2))
    # the impossible order-4 chain tree keeps its coefficient at 1
    assert result.final_errors["[[[[]]]]"] == pytest.approx(1.0, abs=1e-9)


def test_evolve_determinism():
    es = ESConfig(population=120, parents=60, max_iterations=1200, rng_seed=4,
                  stagnation_generations=200)
    r1 = evolve_runge_kutta(stages=2, es=es, restarts=1)
    r2 = evolve_runge_kutta(stages=2, es=es, restarts=1)
    assert len(r1.archives[2]) == len(r2.archives[2])
    for a, b in zip(r1.archives[2].records, r2.archives[2].records):
        assert np.array_equal(a.x, b.x)
        assert a.fitness == b.fitness and a.generation == b.generation


# ---------------------------------------------------------------------------
# pareto front
# ---------------------------------------------------------------------------

def test_pareto_singleton():
    a = Archive(order=2)
    a.add(record([1.0, 0.0, 1.0], order=2, fitness=0.0))
    front = pareto_front(a, 2, stages=2)
    assert len(front.records) == 1
    assert front.coordinates.shape == (1, 2)   # two trees of order 3


def test_pareto_dominated_point_removed():
    a = Archive(order=2)
    # midpoint zeroes the order-2 residual and has small order-3 errors
    a.add(record([0.5, 0.0, 1.0], order=2, fitness=0.0))
    # a detuned variant with strictly larger order-3 coordinates
    a.add(record([0.4, 0.0, 1.0], order=2, fitness=0.1))
    front = pareto_front(a, 2, stages=2)
    coords_all = [front.coordinates[i] for i in range(len(front.records))]
    assert len(front.records) >= 1
    for i, u in enumerate(coords_all):
        for j, v in enumerate(coords_all):
            if i != j:
                assert not dominates(u, v)


def test_pareto_empty_archive():
    front = pareto_front(Archive(order=3), 3, stages=3)
    assert front.records == []
