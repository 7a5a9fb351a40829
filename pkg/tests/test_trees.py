import math

import pytest

from rkevolve.trees import (LEAF, MAX_ORDER, RootedTree, alpha,
                            cumulative_counts, enumerate_trees, from_encoding,
                            gamma, invariants, sigma, tree, tree_counts,
                            trees_of_order)

from oracles import alpha_by_bruteforce

KNOWN_COUNTS = [1, 1, 2, 4, 9, 20, 48, 115, 286, 719]
KNOWN_CUMULATIVE = [1, 2, 4, 8, 17, 37, 85, 200, 486, 1205]


def test_counts_through_order_10():
    assert tree_counts(10) == KNOWN_COUNTS


def test_cumulative_counts():
    assert cumulative_counts(10) == KNOWN_CUMULATIVE


def test_single_node_base_case():
    groups = enumerate_trees(1)
    assert list(groups) == [1]
    ((t, iv),) = groups[1]
    assert t == LEAF
    assert (iv.gamma, iv.alpha, iv.sigma) == (1, 1, 1)


@pytest.mark.parametrize("bad", [0, -1, MAX_ORDER + 1])
def test_order_bounds(bad):
    with pytest.raises(ValueError):
        enumerate_trees(bad)
    with pytest.raises(ValueError):
        tree_counts(bad)


def test_no_duplicate_encodings():
    for p in range(1, 9):
        encodings = [t.encoding for t in trees_of_order(p)]
        assert len(encodings) == len(set(encodings))
        assert encodings == sorted(encodings)


def test_children_sorted_and_equality():
    a = tree(tree(LEAF), LEAF)
    b = tree(LEAF, tree(LEAF))
    assert a.children == b.children
    assert a == b and hash(a) == hash(b)
    assert a.encoding == b.encoding


def test_order_is_node_count():
    t = tree(tree(LEAF, LEAF), tree(LEAF))
    assert t.order == 1 + sum(c.order for c in t.children) == 6


def test_gamma_examples():
    assert gamma(LEAF) == 1
    assert gamma(from_encoding("[[][]]")) == 3
    assert gamma(from_encoding("[[[]]]")) == 6


def test_alpha_examples():
    assert alpha(LEAF) == 1
    assert alpha(from_encoding("[[[]][]]")) == 3
    assert alpha(from_encoding("[[[[]]]]")) == 1


def test_product_identity_through_order_10():
    for p in range(1, 11):
        for t in trees_of_order(p):
            iv = invariants(t)
            assert iv.alpha * iv.sigma * iv.gamma == math.factorial(p)


def test_alpha_matches_bruteforce_through_order_6():
    for p in range(1, 7):
        for t in trees_of_order(p):
            assert alpha(t) == alpha_by_bruteforce(t), t.encoding


def test_alpha_sums_to_factorial():
    for p in range(1, 11):
        assert sum(alpha(t) for t in trees_of_order(p)) == math.factorial(p - 1)


def test_from_encoding_roundtrip():
    for p in range(1, 8):
        for t in trees_of_order(p):
            assert from_encoding(t.encoding) == t


@pytest.mark.parametrize("bad", ["", "[", "[]]", "][", "[[]", "[]x"])
def test_from_encoding_rejects_malformed(bad):
    with pytest.raises(ValueError):
        from_encoding(bad)


def test_trees_are_immutable():
    with pytest.raises(AttributeError):
        LEAF.order = 5
