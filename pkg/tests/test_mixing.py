import random
from fractions import Fraction

import pytest

from edgecolor_lab.mixing import (
    HypothesisError,
    contraction_bound,
    fit_rate,
    hardness_witness,
    perturbed_children,
    root_edge,
    ssm_experiment,
    write_csv,
    wsm_contraction_check,
    wsm_experiment,
    wsm_theorem_rate,
)


@pytest.mark.parametrize("delta,q", [(3, 4), (4, 6)])
def test_hardness_freezes_root(delta, q):
    h = hardness_witness(delta, 2, q)
    assert h["tv"][root_edge(h["instance"])] == 1
    assert h["parity_ok"] and h["all_one"]


def test_wsm_decay_frozen_values():
    rep = wsm_experiment(3, 5, range(2, 5))
    assert rep.tv == [Fraction(4, 9), Fraction(2, 9), Fraction(56, 477)]
    assert rep.passed


def test_identical_pinnings_give_zero():
    rep = wsm_experiment(3, 5, [2, 3], identical=True)
    assert rep.tv == [0, 0]


def test_fit_rate_on_geometric_sequence():
    assert fit_rate([1, 2, 3, 4], [Fraction(1, 2 ** k) for k in range(1, 5)]) == pytest.approx(0.5)


def test_theorem_rate_delta_three():
    assert wsm_theorem_rate(3) == pytest.approx(12 / 13)


def test_contraction_bound_value():
    assert contraction_bound(3, 7, Fraction(1, 100)) == Fraction(2, 231)


def test_contraction_never_violated():
    rng = random.Random(4)
    for dev in (Fraction(1, 1000), Fraction(1, 100)):
        for q in (7, 9):
            res = wsm_contraction_check(perturbed_children(rng, 2, q, dev), q, dev)
            assert res["passed"] and res["observed"] <= res["bound"]


def test_contraction_hypothesis():
    rng = random.Random(0)
    with pytest.raises(HypothesisError):
        wsm_contraction_check(perturbed_children(rng, 2, 5, Fraction(1, 100)), 5, Fraction(1, 4))


def test_ssm_surgery_and_decay():
    rep = ssm_experiment(3, 14, range(2, 5), extra_pins=3)
    assert rep.checks["surgery_matches_direct"]
    assert all(a > b for a, b in zip(rep.tv, rep.tv[1:]))


def test_empty_boundary_ssm_is_zero():
    rep = ssm_experiment(3, 10, [2, 3], empty_boundary=True)
    assert rep.tv == [0, 0]


def test_csv_layout(tmp_path):
    rep = wsm_experiment(3, 5, [2])
    path = tmp_path / "t.csv"
    write_csv([rep], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "family,delta,q,beta,ell,tv_num,tv_den,tv_float"
    assert lines[1].endswith(",2,4,9,0.44444444444444442")
