import random
from fractions import Fraction

import pytest

from edgecolor_lab.exact import WeightedBoundary
from edgecolor_lab.instance import StructuralError, tree_from_parents
from edgecolor_lab.trickledown import (
    Certificate,
    CodimensionError,
    base_case_check,
    build_complex,
    coefficient_sequences,
    consistency_identity,
    final_bound_check,
    induction_check,
    lemma_identities,
    link,
    mixture_identity,
    product_form_matches,
    reversibility_holds,
    verify_certificate,
    weighted_broom_tree,
    weighted_quantities,
)

NONE = WeightedBoundary(())


@pytest.fixture
def cherry():
    """Uniform 2-edge broom over three colours."""
    return build_complex(tree_from_parents([0, 0], 3), NONE, "v0")


@pytest.fixture(scope="module")
def small_weighted():
    T, B, v = weighted_broom_tree(random.Random(3), 3, 3, 2)
    return T, B, build_complex(T, B, v)


def test_cherry_facets_uniform(cherry):
    assert set(cherry.mu_K().entries.values()) == {Fraction(1, 6)}
    lk = link(cherry, {}, exact=True)
    assert list(lk.pi) == [Fraction(1, 6)] * 6


def test_single_free_edge_walks_by_its_marginal(cherry):
    lk = link(cherry, {"e0": 1}, exact=True)
    assert lk.X == [("e1", 2), ("e1", 3)]
    assert (lk.walk() == Fraction(1, 2)).all()


def test_cherry_final_bound(cherry):
    res = final_bound_check(cherry)
    # whitened ΠP − 2ππᵀ has eigenvalue ±1/2 on the colour-centred subspace
    assert res["lambda"] == pytest.approx(0.5)
    assert res["pi_identity"] and res["cov_identity"]


def test_cherry_base_case(cherry):
    assert base_case_check(cherry, {}).passed


def test_base_case_needs_two_free_edges(small_weighted):
    _, _, st = small_weighted
    with pytest.raises(CodimensionError):
        base_case_check(st, {})


def test_broom_adjacent_to_boundary_rejected():
    T, B, _ = weighted_broom_tree(random.Random(0), 3, 2, 2)
    deep = next(v for v in T.vertices if T.depth[v] == 1)
    with pytest.raises(StructuralError):
        build_complex(T, B, deep)


def test_product_form_and_mixture(small_weighted):
    T, B, st = small_weighted
    assert product_form_matches(st)


def test_mixture_identity_small():
    T = tree_from_parents([0, 1, 1], 4)
    B = WeightedBoundary(((("e1", "e2"), {(1, 2): 3, (2, 1): 1, (3, 4): 2}),))
    assert mixture_identity(T, B)


def test_reversibility_exact(small_weighted):
    _, _, st = small_weighted
    e = st.K[0]
    c = next(c for c in st.lists[e] if st.p[e][c])
    assert reversibility_holds(link(st, {}, exact=True))
    assert reversibility_holds(link(st, {e: c}, exact=True))


def test_weighted_quantity_bounds_at_large_beta():
    T, B, v = weighted_broom_tree(random.Random(3), 3, 3, 53)
    wq = weighted_quantities(build_complex(T, B, v))
    assert wq["ratio_le_inv_beta"] and wq["pair_le_product_over_beta"]
    assert wq["min_slack_ratio_beta"] > 0 and wq["min_slack_pair"] > 0
    # the list-length form is reported, not asserted: skewed boundary weights break it
    assert wq["min_slack_ratio_list"] < 0


def test_list_form_tight_without_boundary(cherry):
    wq = weighted_quantities(cherry)
    assert wq["min_slack_ratio_list"] == 0


def test_identities_exact(small_weighted):
    _, _, st = small_weighted
    assert lemma_identities(st) == {"pi_identity": True, "cov_identity": True}
    assert consistency_identity(st, coefficient_sequences(3, st.beta)) == {"A_identity": True, "Pi_identity": True}


def test_coefficients_frozen():
    c = coefficient_sequences(3, 53)
    assert c.gamma == Fraction(19683, 913952)
    assert c.a[3] == Fraction(228488, 248171)
    assert c.b[2] == pytest.approx(2 / 52**2)
    assert c.b[3] == pytest.approx(0.001883386390844427, rel=1e-12)
    assert c.feasible and c.log_base == "natural"


def test_derived_constraint_adds_adjacency_budget():
    c = coefficient_sequences(3, 53, constraint="derived")
    assert c.b[3] == pytest.approx(0.00865252986110901, rel=1e-12)
    assert c.b[3] <= 0.1


def test_infeasible_beta_reports_first_failure():
    c = coefficient_sequences(3, 3)
    assert not c.feasible and c.first_failure == 2


def test_printed_constraints_fail_induction_at_beta_53():
    T, B, v = weighted_broom_tree(random.Random(7), 3, 3, 53)
    st = build_complex(T, B, v)
    printed = verify_certificate(st, "printed")
    derived = verify_certificate(st, "derived")
    assert printed.min_margin("base_case") >= 0
    assert printed.min_margin("expectation_step") == pytest.approx(-7.0858e-4, rel=1e-3)
    assert printed.min_margin("upper_by_pi") > 0
    assert derived.passed
    assert derived.min_margin("expectation_step") == pytest.approx(2.5252e-3, rel=1e-3)


def test_induction_rejects_codim_two(small_weighted):
    _, _, st = small_weighted
    cert = Certificate(st, coefficient_sequences(3, 53))
    e = st.K[0]
    c = next(c for c in st.lists[e] if st.p[e][c])
    with pytest.raises(CodimensionError):
        induction_check(cert, {e: c})
