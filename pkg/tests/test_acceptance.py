"""One test per acceptance criterion, each printing a single pass/fail line.

Run with `pytest -s tests/test_acceptance.py` to see the lines.
"""

from edgecolor_lab import acceptance


def _run(fn, **kwargs):
    res = fn(**kwargs)
    print("\n" + res.line())
    return res


def test_criterion_01_counting_oracle():
    res = _run(acceptance.counting_oracle)
    assert res.passed, res.detail
    assert res.seconds < 60


def test_criterion_02_recursion_equals_marginal():
    res = _run(acceptance.recursion_equals_marginal)
    assert res.passed, res.detail


def test_criterion_03_marginal_bound_battery():
    res = _run(acceptance.marginal_bound_battery)
    assert res.passed, res.detail


def test_criterion_04_worst_pinning_spectrum():
    res = _run(acceptance.worst_pinning_spectrum)
    assert res.passed, res.detail


def test_criterion_05_dimension_reduction_chain():
    res = _run(acceptance.dimension_reduction_chain)
    assert res.passed, res.detail


def test_criterion_06_jacobian_finite_differences():
    res = _run(acceptance.jacobian_finite_differences)
    assert res.passed, res.detail


def test_criterion_07_coupling_decomposition():
    res = _run(acceptance.coupling_decomposition)
    assert res.passed, res.detail
    assert res.detail["max_w1"] <= 3


def test_criterion_08_wsm_threshold():
    res = _run(acceptance.wsm_threshold)
    assert res.passed, res.detail
    assert res.seconds < 300


def test_criterion_09_wsm_contraction():
    res = _run(acceptance.wsm_contraction)
    assert res.passed, res.detail


def test_criterion_10_trickledown_certificate():
    """Runs the certificate with b_k from the constraint system as printed.

    This fails: the expectation step is violated by about 7e-4 on every broom tried.
    The constraint that also budgets the adjacency term passes; see the companion test.
    """
    res = _run(acceptance.trickledown_certificate)
    for row in res.detail["brooms"]:
        print(f"  seed {row['seed']}: base {row['base_case_min_margin']:.3g}, "
              f"expectation {row['expectation_min_margin']:.3g}, upper {row['upper_min_margin']:.3g}, "
              f"lambda(d-1) {row['lambda_times_d_minus_1']:.3g} <= eta {row['eta']:.4g}")
    assert res.passed, res.detail


def test_criterion_10_with_adjacency_budget():
    res = _run(acceptance.trickledown_certificate, constraint="derived")
    assert res.passed, res.detail


def test_criterion_11_spectral_independence():
    res = _run(acceptance.spectral_independence)
    print(f"  max measured SI constant {res.detail['max_measured_si']:.6g} vs bound {res.detail['bound']:.6g}")
    assert res.passed, res.detail
