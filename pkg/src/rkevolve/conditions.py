"""Order-condition residuals, per-order metrics, and the search fitness.

For a tableau ``(a, w)`` and a rooted tree ``t`` the elementary weight
vector ``phi(t)`` obeys the recursion

    phi(single node) = (1, ..., 1)
    phi([t1 .. tm])  = elementwise product over i of  a @ phi(ti)

and the method satisfies the condition of ``t`` exactly when
``w . phi(t) == 1/gamma(t)``.  The residual used everywhere is the error
coefficient ``e(t) = 1 - gamma(t) * w . phi(t)``.

Aggregates are alpha-weighted L1 means: the per-order metric averages
``|e|`` over the trees of one order, the fitness over all trees up to
``q+1``.  Feasibility to order q compares each per-order metric against
the threshold ``c_p = N_p * amplification * eps_base`` where ``N_p`` is
the cumulative equation count through order p.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tableau import ButcherTableau
from .trees import RootedTree, alpha, cumulative_counts, gamma, trees_of_order

DEFAULT_AMPLIFICATION = 4.0
DEFAULT_EPS_BASE = 1e-15


def default_thresholds(max_order: int,
                       amplification: float = DEFAULT_AMPLIFICATION,
                       eps_base: float = DEFAULT_EPS_BASE) -> dict[int, float]:
    """Per-order feasibility thresholds ``c_p`` for p = 1..max_order."""
    cum = cumulative_counts(max_order)
    return {p: cum[p - 1] * amplification * eps_base for p in range(1, max_order + 1)}


def _effective_a(t: ButcherTableau) -> np.ndarray:
    # Explicit methods only ever read the strictly lower triangle; masking
    # keeps the evaluation independent of the structurally-zero slots.
    return np.tril(t.a, -1) if t.explicit else t.a


def elementary_weights(t: ButcherTableau, tree: RootedTree) -> np.ndarray:
    """Vector ``phi(tree)`` of per-stage elementary weights."""
    a = _effective_a(t)
    memo: dict[RootedTree, np.ndarray] = {}

    def phi(node: RootedTree) -> np.ndarray:
        got = memo.get(node)
        if got is None:
            got = np.ones(t.stages)
            for child in node.children:
                got = got * (a @ phi(child))
            memo[node] = got
        return got

    return phi(tree)


def error_coefficient(t: ButcherTableau, tree: RootedTree) -> float:
    """``e(tree) = 1 - gamma(tree) * w . phi(tree)``; zero iff the condition holds."""
    return 1.0 - gamma(tree) * float(t.w @ elementary_weights(t, tree))


@dataclass(frozen=True)
class ConditionSystem:
    """Residual system for s-stage methods through order ``max_order + 1``.

    Precomputes the tree list, the topological evaluation plan for the
    phi recursion, the alpha weights ``r_t`` (normalized over all trees
    through ``max_order + 1``) and the thresholds ``c_p``.  Instances are
    immutable and shared; evaluation is pure.
    """

    stages: int
    max_order: int
    explicit: bool
    trees: tuple[RootedTree, ...]          # orders 1..max_order+1, flat
    tree_order: np.ndarray                 # order of each tree
    gammas: np.ndarray
    alphas: np.ndarray
    alpha_totals: np.ndarray               # sum of alpha per order 1..max_order+1
    weights: np.ndarray                    # r_t, sums to 1
    thresholds: dict[int, float]
    _plan: tuple[tuple[int, ...], ...]     # child indices per tree

    @staticmethod
    def build(stages: int, max_order: int, explicit: bool = True,
              amplification: float = DEFAULT_AMPLIFICATION,
              eps_base: float = DEFAULT_EPS_BASE) -> "ConditionSystem":
        top = max_order + 1
        flat: list[RootedTree] = []
        for p in range(1, top + 1):
            flat.extend(trees_of_order(p))
        index = {t: i for i, t in enumerate(flat)}
        plan = tuple(tuple(index[c] for c in t.children) for t in flat)
        alphas = np.array([alpha(t) for t in flat], dtype=float)
        orders = np.array([t.order for t in flat])
        return ConditionSystem(
            stages=stages,
            max_order=max_order,
            explicit=explicit,
            trees=tuple(flat),
            tree_order=orders,
            gammas=np.array([gamma(t) for t in flat], dtype=float),
            alphas=alphas,
            alpha_totals=np.array([alphas[orders == p].sum()
                                   for p in range(1, top + 1)]),
            weights=alphas / alphas.sum(),
            thresholds=default_thresholds(top, amplification, eps_base),
            _plan=plan,
        )

    @property
    def dimension(self) -> int:
        from .tableau import vector_length
        return vector_length(self.stages, self.explicit)

    def trees_at(self, p: int) -> tuple[RootedTree, ...]:
        return tuple(t for t in self.trees if t.order == p)

    def error_coefficients_batch(self, x: np.ndarray) -> np.ndarray:
        """Residuals ``e(t)`` for a batch of flat parameter vectors.

        ``x`` has shape (n, dim); the result has shape (n, n_trees) with
        trees in the flat (order, encoding) order of ``self.trees``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        s = self.stages
        if x.shape[1] != self.dimension:
            raise ValueError(
                f"expected vectors of length {self.dimension}, got {x.shape[1]}")
        a = np.zeros((n, s, s))
        if self.explicit:
            k = 0
            for i in range(s):
                for j in range(i):
                    a[:, i, j] = x[:, k]
                    k += 1
            w = x[:, k:]
        else:
            a = x[:, : s * s].reshape(n, s, s)
            w = x[:, s * s:]
        phi: list[np.ndarray] = []
        for children in self._plan:
            if not children:
                phi.append(np.ones((n, s)))
            else:
                prod = np.einsum("nij,nj->ni", a, phi[children[0]])
                for c in children[1:]:
                    prod = prod * np.einsum("nij,nj->ni", a, phi[c])
                phi.append(prod)
        e = np.empty((n, len(self.trees)))
        for k, vec in enumerate(phi):
            e[:, k] = 1.0 - self.gammas[k] * np.einsum("ni,ni->n", w, vec)
        return e

    def order_metrics_batch(self, x: np.ndarray) -> np.ndarray:
        """Alpha-weighted mean ``|e|`` per order; shape (n, max_order+1)."""
        e = np.abs(self.error_coefficients_batch(x))
        out = np.empty((e.shape[0], self.max_order + 1))
        for p in range(1, self.max_order + 2):
            mask = self.tree_order == p
            out[:, p - 1] = (e[:, mask] @ self.alphas[mask]) / self.alphas[mask].sum()
        return out

    def fitness_batch(self, x: np.ndarray) -> np.ndarray:
        """Alpha-weighted mean ``|e|`` over every tree through order q+1."""
        e = np.abs(self.error_coefficients_batch(x))
        return e @ self.weights

    def feasibility_batch(self, x: np.ndarray, order: int) -> np.ndarray:
        """Boolean mask: metrics strictly below ``c_p`` for every p <= order."""
        metrics = self.order_metrics_batch(x)
        ok = np.ones(metrics.shape[0], dtype=bool)
        for p in range(1, order + 1):
            ok &= metrics[:, p - 1] < self.thresholds[p]
        return ok


@lru_cache(maxsize=32)
def _system(stages: int, max_order: int, explicit: bool) -> ConditionSystem:
    return ConditionSystem.build(stages, max_order, explicit)


def order_metric(t: ButcherTableau, p: int) -> float:
    """Alpha-weighted mean ``|e(t)|`` over the trees of order ``p``."""
    if p < 1:
        raise ValueError("order must be >= 1")
    sys = _system(t.stages, p - 1, t.explicit)
    return float(sys.order_metrics_batch(t.to_vector()[None, :])[0, p - 1])


def fitness(t: ButcherTableau, q: int) -> float:
    """Weighted L1 residual over all trees of order <= q+1."""
    if q < 1:
        raise ValueError("order must be >= 1")
    sys = _system(t.stages, q, t.explicit)
    return float(sys.fitness_batch(t.to_vector()[None, :])[0])


@dataclass(frozen=True)
class OrderReport:
    order: int
    metric: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking a tableau against orders 1..q."""

    stages: int
    explicit: bool
    order: int
    feasible: bool
    per_order: tuple[OrderReport, ...]
    tree_errors: tuple[tuple[str, int, float], ...]  # (encoding, order, e)

    def __bool__(self) -> bool:
        return self.feasible


def is_feasible_to_order(t: ButcherTableau, q: int,
                         thresholds: dict[int, float] | float | None = None
                         ) -> FeasibilityReport:
    """Check the order-p metrics against ``c_p`` for every p <= q.

    ``thresholds`` may be a per-order dict, a single uniform tolerance, or
    None for the default ``c_p`` table.
    """
    if q < 1:
        raise ValueError("order must be >= 1")
    sys = _system(t.stages, q, t.explicit)
    if thresholds is None:
        limits = sys.thresholds
    elif isinstance(thresholds, dict):
        limits = thresholds
    else:
        limits = {p: float(thresholds) for p in range(1, q + 1)}
    x = t.to_vector()[None, :]
    metrics = sys.order_metrics_batch(x)[0]
    errors = sys.error_coefficients_batch(x)[0]
    per_order = []
    feasible = True
    for p in range(1, q + 1):
        ok = metrics[p - 1] < limits[p]
        feasible &= ok
        per_order.append(OrderReport(order=p, metric=float(metrics[p - 1]),
                                     threshold=float(limits[p]), passed=bool(ok)))
    rows = tuple(
        (tree.encoding, tree.order, float(errors[k]))
        for k, tree in enumerate(sys.trees) if tree.order <= q
    )
    return FeasibilityReport(stages=t.stages, explicit=t.explicit, order=q,
                             feasible=bool(feasible), per_order=tuple(per_order),
                             tree_errors=rows)
