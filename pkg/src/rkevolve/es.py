"""Covariance-adapting evolution strategy for black-box minimization.

Self-contained (mu+lambda) strategy with CMA-style adaptation: offspring
are sampled around the weighted mean of the mu best individuals, the
global step size follows cumulative step-size adaptation, and the full
covariance matrix gets rank-one plus rank-mu updates.  Selection is
elitist: the next population is the best lambda of parents and offspring
together, so the reported best never worsens.  A "plain" mode disables
all adaptation (fixed-step Gaussian mutation of the parents) for
baseline comparisons and boundary tests.

Runs are reproducible: all randomness comes from one PCG64 generator
seeded from ``ESConfig.rng_seed``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np


class DimensionError(ValueError):
    """Seed vectors do not match the search-space dimension."""


@dataclass
class ESConfig:
    """Strategy parameters.

    ``target_best`` / ``target_mean`` stop the run when the best-ever or
    the population-mean fitness drops below them (0 disables).  The
    stagnation rule aborts runs whose best has not improved by more than
    ``stagnation_tolerance`` for ``stagnation_generations`` generations.
    """

    population: int = 1000
    parents: int = 500
    max_iterations: int = 100_000
    target_best: float = 0.0
    target_mean: float = 0.0
    initial_step: float = 1.0
    rng_seed: int = 0
    mode: str = "cma"                  # "cma" or "plain"
    stagnation_generations: int = 500
    stagnation_tolerance: float = 1e-18
    vectorized: bool = False           # objective takes (n, dim) -> (n,)
    threads: int = 1                   # scalar-objective fan-out; 0 = auto

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("population must be positive")
        if not 1 <= self.parents <= self.population:
            raise ValueError("parents must satisfy 1 <= parents <= population")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.initial_step < 0:
            raise ValueError("initial_step must be >= 0")
        if self.mode not in ("cma", "plain"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ESRun:
    """Outcome of one minimization run."""

    best_x: np.ndarray
    best_fitness: float
    generations: int
    evaluations: int
    termination: str                   # "target_hit" | "budget" | "stagnation"
    best_history: np.ndarray = field(repr=False)
    mean_history: np.ndarray = field(repr=False)
    std_history: np.ndarray = field(repr=False)
    rng_seed: int = 0


def _resolve_threads(threads: int) -> int:
    if threads == 0:
        return os.cpu_count() or 1
    return max(1, threads)


def _make_evaluator(objective, config: ESConfig):
    if config.vectorized:
        return lambda x: np.asarray(objective(x), dtype=float)
    threads = _resolve_threads(config.threads)
    if threads > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
        return lambda x: np.fromiter(pool.map(objective, x), dtype=float,
                                     count=len(x))
    return lambda x: np.fromiter((objective(row) for row in x), dtype=float,
                                 count=len(x))


class _CmaAdapter:
    """Standard CMA state: mean step paths and covariance."""

    def __init__(self, dim: int, mu: int, sigma: float):
        self.dim = dim
        self.sigma = sigma
        weights = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = weights / weights.sum()
        self.mu_eff = 1.0 / np.sum(self.weights ** 2)
        n = dim
        self.c_sigma = (self.mu_eff + 2) / (n + self.mu_eff + 5)
        self.d_sigma = (1 + 2 * max(0.0, math.sqrt((self.mu_eff - 1) / (n + 1)) - 1)
                        + self.c_sigma)
        self.c_c = (4 + self.mu_eff / n) / (n + 4 + 2 * self.mu_eff / n)
        self.c_1 = 2 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(1 - self.c_1,
                        2 * (self.mu_eff - 2 + 1 / self.mu_eff)
                        / ((n + 2) ** 2 + self.mu_eff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.cov = np.eye(n)
        self._decompose()

    def _decompose(self):
        self.cov = (self.cov + self.cov.T) / 2.0
        vals, vecs = np.linalg.eigh(self.cov)
        vals = np.maximum(vals, 1e-40)
        # cap the condition number for numerical sanity
        vals = np.maximum(vals, vals.max() / 1e14)
        self.eigvecs = vecs
        self.scales = np.sqrt(vals)
        self.inv_sqrt = vecs @ np.diag(1.0 / self.scales) @ vecs.T

    def sample(self, rng: np.random.Generator, mean: np.ndarray,
               count: int) -> np.ndarray:
        z = rng.standard_normal((count, self.dim))
        return mean + self.sigma * (z * self.scales) @ self.eigvecs.T

    def update(self, mean_old: np.ndarray, mean_new: np.ndarray,
               selected: np.ndarray, generation: int) -> None:
        if self.sigma == 0.0:
            return
        n = self.dim
        step = (mean_new - mean_old) / self.sigma
        self.p_sigma = ((1 - self.c_sigma) * self.p_sigma
                        + math.sqrt(self.c_sigma * (2 - self.c_sigma) * self.mu_eff)
                        * (self.inv_sqrt @ step))
        norm = float(np.linalg.norm(self.p_sigma))
        h_sigma = (norm / math.sqrt(1 - (1 - self.c_sigma) ** (2 * (generation + 1)))
                   < (1.4 + 2 / (n + 1)) * self.chi_n)
        self.p_c = ((1 - self.c_c) * self.p_c
                    + (math.sqrt(self.c_c * (2 - self.c_c) * self.mu_eff) * step
                       if h_sigma else 0.0))
        y = (selected - mean_old) / self.sigma
        rank_mu = (y * self.weights[:, None]).T @ y
        delta_h = (1 - h_sigma) * self.c_c * (2 - self.c_c)
        self.cov = ((1 - self.c_1 - self.c_mu) * self.cov
                    + self.c_1 * (np.outer(self.p_c, self.p_c) + delta_h * self.cov)
                    + self.c_mu * rank_mu)
        # cap the exponent, then keep sigma inside sane floating-point range
        self.sigma *= math.exp(min(1.0, (self.c_sigma / self.d_sigma)
                                   * (norm / self.chi_n - 1)))
        self.sigma = min(max(self.sigma, 1e-30), 1e30)
        self._decompose()


def minimize(objective, dim: int, seeds=(), config: ESConfig | None = None,
             observer=None) -> ESRun:
    """Minimize a nonnegative black-box function over R^dim.

    ``seeds`` are injected into the initial population (on top of the
    ``population`` random samples).  ``observer(x, f, generation)``, when
    given, sees every evaluated batch.  The run is fully determined by
    ``config.rng_seed``.
    """
    config = config or ESConfig()
    rng = np.random.default_rng(np.random.PCG64(config.rng_seed))
    evaluate = _make_evaluator(objective, config)
    lam, mu = config.population, config.parents

    seeds = np.asarray(list(seeds), dtype=float) if len(seeds) \
        else np.empty((0, dim))
    if seeds.ndim == 1:
        seeds = seeds[None, :]
    if seeds.ndim != 2 or seeds.shape[1] != dim:
        raise DimensionError(
            f"seeds have shape {seeds.shape}, expected (*, {dim})")

    init = rng.standard_normal((lam, dim)) * config.initial_step
    x = np.vstack([seeds, init])
    f = evaluate(x)
    evaluations = x.shape[0]
    if observer is not None:
        observer(x, f, 0)
    keep = np.argsort(f, kind="stable")[:lam]
    pop_x, pop_f = x[keep], f[keep]

    best_idx = int(np.argmin(pop_f))
    best_x, best_f = pop_x[best_idx].copy(), float(pop_f[best_idx])
    best_hist, mean_hist, std_hist = [best_f], [float(pop_f.mean())], [float(pop_f.std())]

    adapter = None
    mean = None
    if config.mode == "cma":
        adapter = _CmaAdapter(dim, mu, config.initial_step)
        order = np.argsort(f, kind="stable")[:mu]
        mean = adapter.weights @ x[order]

    termination = "budget"
    generation = 0
    last_improved = 0
    if best_f < config.target_best or \
            (config.target_mean > 0 and pop_f.mean() < config.target_mean):
        termination = "target_hit"
    else:
        for generation in range(1, config.max_iterations + 1):
            if config.mode == "cma":
                offspring = adapter.sample(rng, mean, lam)
            else:
                parents = pop_x[np.argsort(pop_f, kind="stable")[:mu]]
                noise = rng.standard_normal((lam, dim)) * config.initial_step
                offspring = parents[np.arange(lam) % mu] + noise
            off_f = evaluate(offspring)
            evaluations += lam
            if observer is not None:
                observer(offspring, off_f, generation)

            x = np.vstack([pop_x, offspring])
            f = np.concatenate([pop_f, off_f])
            keep = np.argsort(f, kind="stable")[:lam]
            pop_x, pop_f = x[keep], f[keep]

            if config.mode == "cma":
                # the sampling distribution follows the offspring ranking
                # (standard CMA dynamics); elitism lives in the population
                sel = np.argsort(off_f, kind="stable")[:mu]
                mean_old = mean
                mean = adapter.weights @ offspring[sel]
                adapter.update(mean_old, mean, offspring[sel], generation)

            gen_best = float(pop_f[0])
            if gen_best < best_f - config.stagnation_tolerance:
                last_improved = generation
            if gen_best < best_f:
                best_f = gen_best
                best_x = pop_x[0].copy()
            best_hist.append(best_f)
            mean_hist.append(float(pop_f.mean()))
            std_hist.append(float(pop_f.std()))

            if best_f < config.target_best or \
                    (config.target_mean > 0 and pop_f.mean() < config.target_mean):
                termination = "target_hit"
                break
            if generation - last_improved >= config.stagnation_generations:
                termination = "stagnation"
                break
        else:
            generation = config.max_iterations

    return ESRun(best_x=best_x, best_fitness=best_f, generations=generation,
                 evaluations=evaluations, termination=termination,
                 best_history=np.array(best_hist), mean_history=np.array(mean_hist),
                 std_history=np.array(std_hist), rng_seed=config.rng_seed)
