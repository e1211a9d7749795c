from fractions import Fraction

import pytest

from edgecolor_lab.exact import (
    DistributionTable,
    EnumerationCapError,
    WeightedBoundary,
    brute_count,
    count,
    marginal,
    marginal_bound_audit,
    tree_count,
    tree_edge_marginal,
    weighted_marginal,
)
from edgecolor_lab.instance import EMPTY, Pinning, caterpillar, random_lists, random_tree, tree_from_parents


def test_path_three_colours_counts_twelve(path3):
    assert count(path3) == brute_count(path3) == tree_count(path3) == 12


def test_star_counts_falling_factorial():
    T = tree_from_parents([0, 0, 0], 4)
    assert count(T) == 4 * 3 * 2


def test_two_edge_path_marginals():
    T = tree_from_parents([0, 1], 3, {0: [1, 2], 1: [1, 2, 3]})
    m = marginal(T, EMPTY, ["e1"])
    assert m.entries == {(1,): Fraction(1, 4), (2,): Fraction(1, 4), (3,): Fraction(1, 2)}
    assert tree_edge_marginal(T, EMPTY, "e1").entries == m.entries


def test_pinned_count(path3):
    # e1 ← 2 leaves each outer edge two choices
    assert count(path3, Pinning({"e1": 2})) == 4


def test_random_trees_all_engines_agree(rng):
    for _ in range(30):
        T = random_tree(rng, rng.randint(1, 7), 3, 6)
        T = random_lists(rng, T, 2)
        assert count(T) == brute_count(T) == tree_count(T)


def test_enumeration_cap():
    T = caterpillar(4, 1, 6)
    with pytest.raises(EnumerationCapError):
        brute_count(T, cap=50)


def test_weighted_boundary_reweights():
    T = tree_from_parents([0, 1], 3)
    # weight 2 on e1 = 1, 1 otherwise
    wb = WeightedBoundary(((("e1",), {(1,): 2, (2,): 1, (3,): 1}),))
    m = weighted_marginal(T, wb, EMPTY, ("e0",))
    # e0=1: e1∈{2,3} weight 2; e0=2: 2+1; e0=3: 2+1
    assert m.entries == {(1,): Fraction(2, 8), (2,): Fraction(3, 8), (3,): Fraction(3, 8)}


def test_table_tv_and_projection():
    a = DistributionTable(("x", "y"), {(1, 2): Fraction(1, 2), (2, 1): Fraction(1, 2)})
    b = DistributionTable(("x", "y"), {(1, 2): Fraction(1)})
    assert a.tv(b) == Fraction(1, 2)
    assert a.project(("y",)).entries == {(2,): Fraction(1, 2), (1,): Fraction(1, 2)}


def test_bound_audit_passes_on_extra_lists(rng):
    T = random_lists(rng, tree_from_parents([0, 0, 1, 1], 10), 3)
    audit = marginal_bound_audit(T)
    assert audit.passed and audit.checked > 0
