"""Staged minimization over chains of polynomial varieties.

The generic driver walks a chain of varieties X_1 ⊇ X_2 ⊇ ... defined by
grouped generators: stage j minimizes the weighted residual of the first
j groups, harvesting every evaluated point whose residuals sit inside the
stage's tube radii into an archive that seeds the next stage.  A final
run minimizes a user objective over the innermost tube.

The Runge-Kutta specialization walks the order chain: the cycle at order
q minimizes the fitness over all trees through order q+1 and archives
every candidate that is feasible to order q+1; the loop advances while
new feasible methods keep appearing and stops at the first empty cycle,
reporting the last reachable order together with the minimized
next-order error coefficients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .conditions import ConditionSystem
from .es import ESConfig, ESRun, minimize
from .tableau import ButcherTableau, from_vector
from .trees import RootedTree


def dominates(u: Sequence[float], v: Sequence[float]) -> bool:
    """Minimization dominance: u <= v everywhere and < somewhere."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return bool(np.all(u <= v) and np.any(u < v))


def non_dominated(vectors: Sequence[Sequence[float]]) -> list[int]:
    """Indices of the non-dominated members of ``vectors``."""
    out = []
    for i, u in enumerate(vectors):
        if not any(dominates(v, u) for j, v in enumerate(vectors) if j != i):
            out.append(i)
    return out


# ---------------------------------------------------------------------------
# generic staged problem
# ---------------------------------------------------------------------------

@dataclass
class StagedProblem:
    """A chain of generator groups plus an optional final objective.

    ``generators`` are scalar residual functions; ``group_ends`` are the
    cumulative generator counts closing each group (defaults to an even
    split into ``n_groups`` parts).  ``weights`` live on the simplex over
    all generators.  ``tube_radii`` bound the per-stage weighted residual
    sums; the stage-j archive keeps points inside every tube up to j.
    """

    dimension: int
    generators: Sequence[Callable[[np.ndarray], float]]
    tube_radii: Sequence[float]
    group_ends: Sequence[int] | None = None
    n_groups: int | None = None
    weights: Sequence[float] | None = None
    final_objective: Callable[[np.ndarray], float] | None = None
    hard_penalty: float | None = None      # multiplier on out-of-tube groups
    final_penalty: float = 1e6             # tube-violation weight in the final run

    def __post_init__(self):
        m = len(self.generators)
        if self.group_ends is None:
            v = self.n_groups or len(self.tube_radii)
            ends = [i * (m // v) for i in range(1, v)]
            self.group_ends = [*ends, m]
        if self.group_ends[-1] != m or sorted(self.group_ends) != list(self.group_ends):
            raise ValueError("group_ends must increase and end at len(generators)")
        if self.weights is None:
            self.weights = np.full(m, 1.0 / m)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (m,) or np.any(self.weights <= 0):
            raise ValueError("weights must be positive, one per generator")
        if len(self.tube_radii) != len(self.group_ends):
            raise ValueError("one tube radius per group required")

    @property
    def n_stages(self) -> int:
        return len(self.group_ends)

    def residual_sums(self, x: np.ndarray) -> np.ndarray:
        """Weighted residual sum through each group boundary."""
        r = np.array([abs(f(x)) for f in self.generators]) * self.weights
        return np.array([r[: end].sum() for end in self.group_ends])

    def in_tube(self, x: np.ndarray, stage: int) -> bool:
        sums = self.residual_sums(x)
        return all(sums[k] < self.tube_radii[k] for k in range(stage))

    def stage_objective(self, stage: int) -> Callable[[np.ndarray], float]:
        """Objective of stage ``stage`` (1-based): residuals through its group."""

        def objective(x: np.ndarray) -> float:
            sums = self.residual_sums(x)
            value = sums[stage - 1]
            if self.hard_penalty is not None:
                for k in range(stage - 1):
                    if sums[k] >= self.tube_radii[k]:
                        value += self.hard_penalty * sums[k]
            return float(value)

        return objective

    def final_run_objective(self) -> Callable[[np.ndarray], float]:
        radii = np.asarray(self.tube_radii, dtype=float)

        def objective(x: np.ndarray) -> float:
            sums = self.residual_sums(x)
            excess = np.maximum(0.0, sums - radii) / radii
            return float(self.final_objective(x) + self.final_penalty * excess.sum())

        return objective


@dataclass
class StageResult:
    stage: int
    run: ESRun
    archive: list[np.ndarray]
    success: bool


@dataclass
class StagedResult:
    stages: list[StageResult]
    final_run: ESRun | None
    success: bool


def solve_staged(problem: StagedProblem, es: ESConfig) -> StagedResult:
    """Run the stage chain, then the final objective over the last tube.

    Stage j seeds exclusively from stage j-1's archive; an empty archive
    stops the chain and the result reports the failed stage.
    """
    seed_seq = np.random.SeedSequence(es.rng_seed)
    stage_seeds = seed_seq.spawn(problem.n_stages + 1)
    results: list[StageResult] = []
    seeds: list[np.ndarray] = []
    for stage in range(1, problem.n_stages + 1):
        archive: list[np.ndarray] = []

        def collect(x, f, gen, _stage=stage, _archive=archive):
            for row in np.atleast_2d(x):
                if problem.in_tube(row, _stage):
                    _archive.append(np.array(row))

        cfg = _respawn(es, stage_seeds[stage - 1],
                       target_best=problem.tube_radii[stage - 1] / 4,
                       vectorized=False)
        run = minimize(problem.stage_objective(stage), problem.dimension,
                       seeds=seeds, config=cfg, observer=collect)
        ok = bool(archive)
        results.append(StageResult(stage=stage, run=run, archive=archive, success=ok))
        if not ok:
            return StagedResult(stages=results, final_run=None, success=False)
        seeds = archive[-min(len(archive), es.population):]
    final_run = None
    if problem.final_objective is not None:
        cfg = _respawn(es, stage_seeds[-1], target_best=0.0, vectorized=False)
        final_run = minimize(problem.final_run_objective(), problem.dimension,
                             seeds=seeds, config=cfg)
    return StagedResult(stages=results, final_run=final_run, success=True)


def _respawn(es: ESConfig, seed_seq: np.random.SeedSequence, **overrides) -> ESConfig:
    cfg = ESConfig(**{**es.__dict__, **overrides})
    cfg.rng_seed = int(seed_seq.generate_state(1, dtype=np.uint64)[0])
    return cfg


# ---------------------------------------------------------------------------
# Runge-Kutta specialization
# ---------------------------------------------------------------------------

@dataclass
class ArchiveRecord:
    """One feasible method: parameter vector plus its evaluation snapshot."""

    x: np.ndarray
    order: int
    metrics: dict[int, float]
    fitness: float
    generation: int
    seed: int


@dataclass
class Archive:
    """Feasible methods of one order, deduplicated, capped by fitness.

    Retention is amortized: the record list may grow to twice the capacity
    before the worst-fitness excess is pruned, and ``prune`` trims it back
    to the cap (called at the end of every cycle).
    """

    order: int
    capacity: int = 10_000
    records: list[ArchiveRecord] = field(default_factory=list)
    _seen: set[bytes] = field(default_factory=set, repr=False)

    def add(self, record: ArchiveRecord) -> bool:
        key = record.x.tobytes()
        if key in self._seen:
            return False
        self._seen.add(key)
        self.records.append(record)
        if len(self.records) >= 2 * self.capacity:
            self.prune()
        return True

    def prune(self) -> None:
        if len(self.records) <= self.capacity:
            return
        self.records.sort(key=lambda r: r.fitness)
        for dropped in self.records[self.capacity:]:
            self._seen.discard(dropped.x.tobytes())
        del self.records[self.capacity:]

    def __len__(self) -> int:
        return len(self.records)

    def points(self) -> np.ndarray:
        return np.array([r.x for r in self.records])


@dataclass
class CycleResult:
    order: int                 # the cycle's base order q
    target_order: int          # q + 1
    runs: list[ESRun]
    new_records: int
    success: bool


@dataclass
class ParetoSet:
    """Non-dominated archive records under per-tree |e| of one order."""

    order: int                              # coordinates come from T_{order+1}
    trees: tuple[RootedTree, ...]
    records: list[ArchiveRecord]
    coordinates: np.ndarray                 # one row of |e(t)| per record


@dataclass
class EvolveResult:
    stages: int
    explicit: bool
    archives: dict[int, Archive]
    cycles: list[CycleResult]
    q_max: int | None
    final_run: ESRun | None
    final_errors: dict[str, float] | None   # next-order e(t) at the final best
    pareto: ParetoSet | None


def cycle(stages: int, q: int, es: ESConfig, old_archive: Archive | None = None,
          explicit: bool = True, restarts: int = 3,
          archives: dict[int, Archive] | None = None,
          archive_capacity: int = 10_000,
          hard_penalty: float | None = None,
          amplification: float = 4.0, eps_base: float = 1e-15,
          seed_seq: np.random.SeedSequence | None = None
          ) -> tuple[Archive, CycleResult]:
    """One order step: minimize the order-(q+1) fitness, harvest feasibles.

    Every evaluated candidate that is feasible to order q+1 lands in the
    new archive (and order-q feasibles top up the old order's archive).
    Returns the new archive plus run statistics; ``success`` means the
    cycle produced at least one new order-(q+1) record.
    """
    system = ConditionSystem.build(stages, q, explicit, amplification, eps_base)
    dim = system.dimension
    if archives is None:
        archives = {}
    new_archive = archives.setdefault(
        q + 1, Archive(order=q + 1, capacity=archive_capacity))
    own_archive = archives.setdefault(
        q, Archive(order=q, capacity=archive_capacity))
    seed_seq = seed_seq or np.random.SeedSequence(es.rng_seed)
    run_seeds = seed_seq.spawn(restarts + 2)
    rng = np.random.default_rng(run_seeds[-1])

    def objective(x: np.ndarray) -> np.ndarray:
        metrics = system.order_metrics_batch(x)
        value = metrics @ system.alpha_totals / system.alpha_totals.sum()
        if hard_penalty is not None:
            for p in range(1, q + 1):
                bad = metrics[:, p - 1] >= system.thresholds[p]
                value = value + hard_penalty * metrics[:, p - 1] * bad
        return value

    added_counter = [0]
    runs: list[ESRun] = []
    for attempt in range(restarts + 1):
        if attempt == 0:
            pool = old_archive.points() if old_archive and len(old_archive) else None
        else:
            source = new_archive if len(new_archive) else (
                old_archive if old_archive and len(old_archive) else None)
            pool = source.points() if source is not None else None
        if pool is not None and len(pool):
            take = min(len(pool), es.population)
            idx = rng.choice(len(pool), size=take, replace=False)
            seeds = pool[np.sort(idx)]
        else:
            seeds = ()
        run_seed = int(run_seeds[attempt].generate_state(1, dtype=np.uint64)[0])
        cfg = ESConfig(**{**es.__dict__,
                          "rng_seed": run_seed,
                          "vectorized": True,
                          "target_best": system.thresholds[q + 1] / 4,
                          "target_mean": system.thresholds[q + 1]})

        def collect(x, f, gen, _seed=run_seed):
            metrics = system.order_metrics_batch(x)
            ok_new = np.ones(len(metrics), dtype=bool)
            for p in range(1, q + 2):
                ok_new &= metrics[:, p - 1] < system.thresholds[p]
            ok_old = np.ones(len(metrics), dtype=bool)
            for p in range(1, q + 1):
                ok_old &= metrics[:, p - 1] < system.thresholds[p]
            for i in np.flatnonzero(ok_old):
                record = ArchiveRecord(
                    x=np.array(x[i]), order=q,
                    metrics={p: float(metrics[i, p - 1]) for p in range(1, q + 2)},
                    fitness=float(f[i]), generation=gen, seed=_seed)
                if ok_new[i]:
                    if new_archive.add(ArchiveRecord(
                            x=np.array(x[i]), order=q + 1,
                            metrics=record.metrics, fitness=float(f[i]),
                            generation=gen, seed=_seed)):
                        added_counter[0] += 1
                own_archive.add(record)

        runs.append(minimize(objective, dim, seeds=seeds, config=cfg,
                             observer=collect))
    new_archive.prune()
    own_archive.prune()
    added = added_counter[0]
    result = CycleResult(order=q, target_order=q + 1, runs=runs,
                         new_records=added, success=added > 0)
    return new_archive, result


def evolve_runge_kutta(stages: int, q_start: int = 2, explicit: bool = True,
                       es: ESConfig | None = None, restarts: int = 3,
                       max_order: int = 9, archive_capacity: int = 10_000,
                       hard_penalty: float | None = None,
                       amplification: float = 4.0,
                       eps_base: float = 1e-15) -> EvolveResult:
    """Walk the order chain until a cycle produces no new feasible methods.

    Starts at ``q_start`` from random initialization; each later cycle
    seeds from the previous order's archive.  Reports the last order with
    a non-empty archive, the failing cycle's best run, its next-order
    error coefficients, and the Pareto front of the top archive.
    """
    if q_start < 1:
        raise ValueError("q_start must be >= 1")
    es = es or ESConfig()
    master = np.random.SeedSequence(es.rng_seed)
    archives: dict[int, Archive] = {}
    cycles: list[CycleResult] = []
    q = q_start
    last_result: CycleResult | None = None
    while q <= max_order:
        old = archives.get(q)
        cycle_seq = master.spawn(1)[0]
        _, result = cycle(stages, q, es, old_archive=old, explicit=explicit,
                          restarts=restarts, archives=archives,
                          archive_capacity=archive_capacity,
                          hard_penalty=hard_penalty,
                          amplification=amplification, eps_base=eps_base,
                          seed_seq=cycle_seq)
        cycles.append(result)
        last_result = result
        if not result.success:
            break
        q += 1

    populated = [p for p, a in archives.items() if len(a)]
    q_max = max(populated) if populated else None
    final_run = None
    final_errors = None
    if last_result is not None:
        final_run = min(last_result.runs, key=lambda r: r.best_fitness)
        system = ConditionSystem.build(stages, last_result.order, explicit,
                                       amplification, eps_base)
        errs = system.error_coefficients_batch(final_run.best_x[None, :])[0]
        final_errors = {
            t.encoding: float(errs[k]) for k, t in enumerate(system.trees)
            if t.order == last_result.target_order
        }
    pareto = None
    if q_max is not None and len(archives[q_max]):
        pareto = pareto_front(archives[q_max], q_max, stages=stages,
                              explicit=explicit)
    return EvolveResult(stages=stages, explicit=explicit, archives=archives,
                        cycles=cycles, q_max=q_max, final_run=final_run,
                        final_errors=final_errors, pareto=pareto)


def pareto_front(archive: Archive, q: int, stages: int,
                 explicit: bool = True) -> ParetoSet:
    """Non-dominated archive members under |e(t)| over the order-(q+1) trees."""
    system = ConditionSystem.build(stages, q, explicit)
    trees = tuple(t for t in system.trees if t.order == q + 1)
    if not archive.records:
        return ParetoSet(order=q, trees=trees, records=[],
                         coordinates=np.empty((0, len(trees))))
    x = archive.points()
    errs = np.abs(system.error_coefficients_batch(x))
    cols = [k for k, t in enumerate(system.trees) if t.order == q + 1]
    coords = errs[:, cols]
    keep = non_dominated(coords)
    records = [archive.records[i] for i in keep]
    coords = coords[keep]
    order_by_fitness = np.argsort([r.fitness for r in records], kind="stable")
    records = [records[i] for i in order_by_fitness]
    coords = coords[order_by_fitness]
    return ParetoSet(order=q, trees=trees, records=records, coordinates=coords)


# ---------------------------------------------------------------------------
# archive files
# ---------------------------------------------------------------------------

def write_archives(archives: dict[int, Archive], path: str | Path) -> None:
    """One JSON object per line, ascending order then insertion sequence."""
    lines = []
    for order in sorted(archives):
        for r in archives[order].records:
            doc = {"order": r.order, "x": [float(v) for v in r.x],
                   "metrics": {str(p): r.metrics[p] for p in sorted(r.metrics)},
                   "fitness": r.fitness, "gen": r.generation, "seed": r.seed}
            lines.append(json.dumps(doc))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_archives(path: str | Path) -> dict[int, Archive]:
    archives: dict[int, Archive] = {}
    text = Path(path).read_text()
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        order = int(doc["order"])
        archive = archives.setdefault(order, Archive(order=order))
        archive.add(ArchiveRecord(
            x=np.array(doc["x"], dtype=float), order=order,
            metrics={int(p): float(v) for p, v in doc["metrics"].items()},
            fitness=float(doc["fitness"]), generation=int(doc["gen"]),
            seed=int(doc["seed"])))
    return archives


def tableau_of_record(record: ArchiveRecord, stages: int,
                      explicit: bool = True) -> ButcherTableau:
    return from_vector(record.x, stages, explicit)
