import math
from fractions import Fraction

import pytest

from edgecolor_lab.acceptance import random_step
from edgecolor_lab.broom import BroomVector, recurse
from edgecolor_lab.spectral import (
    RegimeError,
    covariance,
    dimension_reduction_audit,
    eta_formula,
    factorization_residual,
    finite_difference_check,
    jacobian,
    matrix_B,
    rank_one_plus_identity,
    spectral_norm,
    threshold_scan,
    worst_pinning_instance,
)


@pytest.mark.parametrize("delta,q,expected", [(3, 9, Fraction(1, 15)), (3, 12, Fraction(1, 36)),
                                              (4, 12, Fraction(1, 16)), (4, 16, Fraction(1, 40))])
def test_worst_pinning_closed_form(delta, q, expected):
    w = worst_pinning_instance(delta, q)
    assert w.closed_form == expected
    assert spectral_norm(matrix_B(w.children, w.root)) == pytest.approx(float(expected), rel=1e-9)
    assert spectral_norm(jacobian(w.children, w.root).J_phi_full) ** 2 == pytest.approx(float(expected), rel=1e-9)


def test_worst_pinning_regime():
    with pytest.raises(RegimeError):
        worst_pinning_instance(3, 5)


def test_eta_uses_natural_log():
    assert eta_formula(3) == pytest.approx((1 + 86 * math.log(3) ** 2) / 3 + 1 / 9)


def test_uniform_single_edge_si_constant_is_one():
    p = recurse([BroomVector.leaf()], [(1, 2, 3, 4)])
    assert covariance(p).measured_si_constant == pytest.approx(1.0)


def test_rank_one_plus_identity():
    assert rank_one_plus_identity(0.5, 2.0, 4)["max_error"] < 1e-12


def test_reduction_chain_on_random_step(rng):
    _, children, lists = random_step(rng, 3, 3)
    rep = dimension_reduction_audit(children, lists)
    assert rep.passed
    assert factorization_residual(children, lists) <= 1e-12


def test_finite_differences(rng):
    _, children, lists = random_step(rng, 3, 3, root_degree=2)
    assert finite_difference_check([c.as_float() for c in children], lists)["passed"]


def test_threshold_scan_delta_three():
    res = threshold_scan(3)
    # (Δ−1)/((q−Δ)(q−2Δ+2)) < 1/3 first at q = 7: 2/(4·3) = 1/6
    assert res["smallest_q"] == 7
