"""Rooted-tree combinatorics for Runge-Kutta order conditions.

Unlabeled rooted trees index the polynomial conditions a Runge-Kutta
method of a given order must satisfy: one tree of order p gives one
equation of order p.  This module enumerates the trees and computes the
three integer invariants attached to each shape:

* ``gamma`` -- the density, reciprocal of the condition's right-hand side;
* ``alpha`` -- the number of monotone labelings, used as equation weight;
* ``sigma`` -- the symmetry (automorphism group size).

Everything here is exact integer arithmetic; the identity
``alpha * sigma * gamma == order!`` holds for every tree and is used as a
self-check throughout the test suite.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cache, lru_cache
from math import factorial
from typing import Iterator

MAX_ORDER = 12


class RootedTree:
    """Canonical unlabeled rooted tree.

    Children are stored sorted by their canonical encoding, so two trees
    are structurally equal iff their encodings are equal.  Instances are
    immutable and hashable.
    """

    __slots__ = ("children", "order", "encoding")

    def __init__(self, children: tuple["RootedTree", ...] = ()):
        kids = tuple(sorted(children, key=lambda t: t.encoding))
        object.__setattr__(self, "children", kids)
        object.__setattr__(self, "order", 1 + sum(k.order for k in kids))
        object.__setattr__(self, "encoding", "[" + "".join(k.encoding for k in kids) + "]")

    def __setattr__(self, name, value):
        raise AttributeError("RootedTree is immutable")

    def __eq__(self, other):
        if not isinstance(other, RootedTree):
            return NotImplemented
        return self.encoding == other.encoding

    def __lt__(self, other: "RootedTree") -> bool:
        return self.encoding < other.encoding

    def __hash__(self):
        return hash(self.encoding)

    def __repr__(self):
        return f"RootedTree({self.encoding!r})"


LEAF = RootedTree()


def tree(*children: RootedTree) -> RootedTree:
    """Build a tree from child subtrees; ``tree()`` is the single node."""
    return RootedTree(children)


def from_encoding(text: str) -> RootedTree:
    """Parse a bracket encoding such as ``"[[][[]]]"`` back into a tree."""
    pos = 0

    def parse() -> RootedTree:
        nonlocal pos
        if pos >= len(text) or text[pos] != "[":
            raise ValueError(f"malformed tree encoding at index {pos}: {text!r}")
        pos += 1
        kids = []
        while pos < len(text) and text[pos] == "[":
            kids.append(parse())
        if pos >= len(text) or text[pos] != "]":
            raise ValueError(f"malformed tree encoding at index {pos}: {text!r}")
        pos += 1
        return RootedTree(tuple(kids))

    out = parse()
    if pos != len(text):
        raise ValueError(f"trailing characters in tree encoding: {text!r}")
    return out


@dataclass(frozen=True)
class TreeInvariants:
    """Integer invariants of one tree shape."""

    order: int
    gamma: int
    alpha: int
    sigma: int


@lru_cache(maxsize=None)
def gamma(t: RootedTree) -> int:
    """Density: order times the product of the children's densities."""
    g = t.order
    for child in t.children:
        g *= gamma(child)
    return g


@lru_cache(maxsize=None)
def sigma(t: RootedTree) -> int:
    """Automorphism group size: permutations of identical child subtrees."""
    out = 1
    for child, mult in Counter(t.children).items():
        out *= factorial(mult) * sigma(child) ** mult
    return out


@lru_cache(maxsize=None)
def alpha(t: RootedTree) -> int:
    """Number of monotone labelings of ``t`` with 1..order.

    Computed by the multinomial recursion over the child multiset; the
    label set splits among subtrees, and permutations of identical
    subtrees are quotiented out.
    """
    num = factorial(t.order - 1)
    den = 1
    for child, mult in Counter(t.children).items():
        num *= alpha(child) ** mult
        den *= factorial(child.order) ** mult * factorial(mult)
    assert num % den == 0
    return num // den


def invariants(t: RootedTree) -> TreeInvariants:
    return TreeInvariants(order=t.order, gamma=gamma(t), alpha=alpha(t), sigma=sigma(t))


@cache
def trees_of_order(order: int) -> tuple[RootedTree, ...]:
    """All distinct rooted trees with ``order`` nodes, encoding-ascending."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {order}")
    if order == 1:
        return (LEAF,)
    pool: list[RootedTree] = []
    for p in range(1, order):
        pool.extend(trees_of_order(p))

    def forests(budget: int, start: int) -> Iterator[tuple[RootedTree, ...]]:
        if budget == 0:
            yield ()
            return
        for i in range(start, len(pool)):
            t = pool[i]
            if t.order <= budget:
                for rest in forests(budget - t.order, i):
                    yield (t, *rest)

    out = [RootedTree(kids) for kids in forests(order - 1, 0)]
    out.sort(key=lambda t: t.encoding)
    return tuple(out)


def enumerate_trees(max_order: int) -> dict[int, list[tuple[RootedTree, TreeInvariants]]]:
    """Trees of every order up to ``max_order``, with their invariants.

    Returns ``{order: [(tree, invariants), ...]}`` with each per-order list
    sorted by canonical encoding.
    """
    if not 1 <= max_order <= MAX_ORDER:
        raise ValueError(f"max_order must be in 1..{MAX_ORDER}, got {max_order}")
    return {
        p: [(t, invariants(t)) for t in trees_of_order(p)]
        for p in range(1, max_order + 1)
    }


def tree_counts(max_order: int) -> list[int]:
    """Number of trees (= order conditions) at each order 1..max_order."""
    if not 1 <= max_order <= MAX_ORDER:
        raise ValueError(f"max_order must be in 1..{MAX_ORDER}, got {max_order}")
    return [len(trees_of_order(p)) for p in range(1, max_order + 1)]


def cumulative_counts(max_order: int) -> list[int]:
    """Running total of condition equations through each order."""
    counts = tree_counts(max_order)
    out = []
    total = 0
    for c in counts:
        total += c
        out.append(total)
    return out
