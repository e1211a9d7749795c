from fractions import Fraction

import pytest

from edgecolor_lab.broom import (
    BroomVector,
    DegenerateInput,
    check_condition_marginal,
    compose_tree,
    from_potential,
    recurse,
    to_potential,
)
from edgecolor_lab.exact import tree_broom_marginal
from edgecolor_lab.instance import EMPTY, random_lists, tree_from_parents


def test_leaf_children_give_uniform_injective_law():
    p = recurse([BroomVector.leaf()] * 2, [(1, 2, 3), (1, 2, 3)])
    assert set(p.values.values()) == {Fraction(1, 6)}
    assert len(p.values) == 6


def test_child_blocking_colour():
    # child puts all mass on colour 1, so the root edge can never be 1
    child = BroomVector(("c",), ((1,),), {(1,): Fraction(1)})
    p = recurse([child], [(1, 2)])
    assert p.values == {(2,): Fraction(1)}


def test_all_blocked_is_degenerate():
    child = BroomVector(("c",), ((1,),), {(1,): Fraction(1)})
    with pytest.raises(DegenerateInput):
        recurse([child], [(1,)])


def test_composition_matches_tree_dp(rng):
    for _ in range(10):
        T = random_lists(rng, tree_from_parents([0, 0, 1, 1, 2, 3], 9), 2)
        laws = compose_tree(T)
        assert laws["v0"].normalize().to_table().entries == tree_broom_marginal(T, EMPTY, "v0").entries


def test_potential_round_trip():
    p = BroomVector(("a",), ((1, 2),), {(1,): 0.25, (2,): 0.75})
    back = from_potential(to_potential(p))
    assert back.values[(1,)] == pytest.approx(0.25)
    assert to_potential(p).values[(2,)] == pytest.approx(2 * 0.75**0.5)


def test_marginal_conditions_hold(rng):
    T = random_lists(rng, tree_from_parents([0, 0, 1, 1, 2], 10), 3)
    laws = compose_tree(T)
    children = [laws[w].normalize() for _, w in T.children["v0"]]
    assert check_condition_marginal(children, laws["v0"], 3)["passed"]
