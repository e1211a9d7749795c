from fractions import Fraction

import pytest

from edgecolor_lab.coupling import (
    ShapeError,
    exchangeable_colors,
    full_discrepancy,
    greedy_decomposition,
    hamming,
    kantorovich_dual_lp,
    single_discrepancy,
    small_pendant_cases,
    wasserstein_hamming,
)
from edgecolor_lab.exact import DistributionTable, joint
from edgecolor_lab.instance import Pinning, tree_from_parents


def table(edges, entries):
    return DistributionTable(edges, {k: Fraction(v) for k, v in entries.items()})


def test_point_masses():
    r = wasserstein_hamming(table(("a", "b"), {(1, 2): 1}), table(("a", "b"), {(2, 1): 1}))
    assert r.value == 2 and r.certified


def test_small_transport_matches_lp():
    mu = table(("a", "b"), {(1, 2): Fraction(1, 2), (2, 1): Fraction(1, 2)})
    nu = table(("a", "b"), {(1, 2): Fraction(1, 2), (1, 3): Fraction(1, 2)})
    assert wasserstein_hamming(mu, nu).value == 1
    assert kantorovich_dual_lp(mu, nu) == pytest.approx(1.0)


def test_solvers_agree():
    mu = table(("a", "b", "c"), {(1, 2, 3): Fraction(1, 3), (2, 3, 1): Fraction(1, 3), (3, 1, 2): Fraction(1, 3)})
    nu = table(("a", "b", "c"), {(1, 3, 2): Fraction(1, 2), (2, 1, 3): Fraction(1, 2)})
    a = wasserstein_hamming(mu, nu, method="ssp").value
    b = wasserstein_hamming(mu, nu, method="simplex").value
    assert a == b
    assert float(a) == pytest.approx(kantorovich_dual_lp(mu, nu))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        wasserstein_hamming(table(("a",), {(1,): 1}), table(("b",), {(1,): 1}))


def test_hamming():
    assert hamming((1, 2, 3), (1, 3, 3)) == 1


def test_exchangeable_classes_quotient_is_exact():
    T = tree_from_parents([0, 1], 7, {0: range(1, 7), 1: range(1, 8)})
    classes = exchangeable_colors(T, {1, 2})
    assert classes == [(3, 4, 5, 6)]
    mu = joint(T, Pinning({"e0": 1}))
    nu = joint(T, Pinning({"e0": 2}))
    assert wasserstein_hamming(mu, nu, classes).value == wasserstein_hamming(mu, nu).value


def test_pendant_path_decomposition():
    # e0 ∈ [6] pendant, e1 ∈ [7]: under e0←1 the neighbour is uniform on {2..7}
    T = tree_from_parents([0, 1], 7, {0: range(1, 7), 1: range(1, 8)})
    r = greedy_decomposition(T, "e0", 1, 2)
    assert r.gamma == {"e1": Fraction(1, 5)} and r.delta == {"e1": Fraction(1, 5)}
    assert r.decomposition_residual == 0 and r.conditioned_equal
    assert r.w1 == Fraction(1, 6) and r.w1_full == Fraction(7, 6)
    assert r.passed


def test_full_discrepancy_splits():
    T = tree_from_parents([0, 1, 2], 7, {0: range(1, 6), 1: range(1, 8), 2: range(1, 7)})
    res = full_discrepancy(T, "e0", 1, 2)
    assert res["split_ok"] and res["w_full"] == 1 + res["w_rest"]
    assert single_discrepancy(T, "e0", 1, 2)["w_full"] == res["w_full"]


def test_small_cases_up_to_three_edges():
    worst = Fraction(0)
    n = 0
    for inst, i, a, b, mult in small_pendant_cases(max_edges=3):
        r = greedy_decomposition(inst, i, a, b, with_w1=False)
        assert r.decomposition_residual == 0 and r.conditioned_equal
        worst = max(worst, full_discrepancy(inst, i, a, b)["w_full"])
        n += 1
    assert n == 34
    assert worst == Fraction(227, 186)
