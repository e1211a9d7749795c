"""The acceptance battery: one function per criterion, each returning a CriterionResult.

Shared by the test suite and the `suite` command so both run exactly the same checks.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction


from . import coupling, exact, mixing, spectral, trickledown
from .broom import check_condition_marginal, compose_tree, recurse
from .instance import EMPTY, Pinning, random_lists, random_tree, tree_from_parents, validate


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:>2} [{status}] {self.name} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn, *args, **kwargs) -> CriterionResult:
    t = time.perf_counter()
    passed, detail = fn(*args, **kwargs)
    return CriterionResult(number, name, passed, detail, time.perf_counter() - t)


# ---------------------------------------------------------------------------
# generators

def bounded_depth_tree(rng: random.Random, n_edges: int, max_degree: int, max_depth: int, q: int):
    """Random rooted tree whose vertices have degree ≤ max_degree and depth ≤ max_depth."""
    parents, deg, depth = [], [0], [0]
    for _ in range(n_edges):
        open_ = [u for u in range(len(deg)) if deg[u] < (max_degree if u == 0 else max_degree - 1)
                 and depth[u] < max_depth]
        if not open_:
            break
        u = rng.choice(open_)
        parents.append(u)
        deg[u] += 1
        deg.append(1)
        depth.append(depth[u] + 1)
    return tree_from_parents(parents, q)


def sparse_lists(rng: random.Random, inst):
    """Lists of size deg(e)+1, occasionally deg(e)+2, so brute force stays cheap but counts are positive."""
    out = {}
    for e in inst.edge_ids:
        size = min(inst.q, inst.edge_degree(e) + 1 + (rng.random() < 0.3))
        out[e] = tuple(sorted(rng.sample(range(1, inst.q + 1), size)))
    return inst.with_lists(out)


def random_step(rng: random.Random, delta: int, beta: int, q: int | None = None, root_degree: int | None = None):
    """A depth-two recursion step: child broom laws from random subtrees and the root lists."""
    d = root_degree or rng.randint(1, delta)
    parents = list(range(0, 1)) * d
    kids = list(range(1, d + 1))
    for u in kids:
        parents += [u] * rng.randint(0, delta - 1)
    T = tree_from_parents(parents, q or (2 * delta - 2 + beta + 2))
    T = random_lists(rng, T, beta)
    laws = compose_tree(T)
    children = [laws[f"v{u}"].normalize() for u in kids]
    root_lists = [T.lists[f"e{k}"] for k in range(d)]
    return T, children, root_lists


# ---------------------------------------------------------------------------
# criteria

def _counting(seed: int, n: int = 200):
    rng = random.Random(seed)
    mismatches = []
    for k in range(n):
        delta = rng.randint(2, 4)
        q = rng.randint(max(3, delta), 7)
        T = sparse_lists(rng, random_tree(rng, rng.randint(1, 12), delta, q))
        brute = exact.brute_count(T)
        dp = exact.tree_count(T)
        if brute != dp or exact.count(T) != brute:
            mismatches.append(k)
    return not mismatches, {"trees": n, "mismatches": mismatches}


def counting_oracle(seed: int = 1) -> CriterionResult:
    return _timed(1, "brute-force count equals tree DP", _counting, seed)


def _recursion(seed: int, n: int = 100):
    rng = random.Random(seed)
    bad = []
    for k in range(n):
        delta = rng.randint(2, 3)
        beta = rng.randint(2, 4)
        q = 2 * delta - 2 + beta + rng.randint(0, 2)
        T = bounded_depth_tree(rng, rng.randint(1, 8), delta, rng.randint(1, 4), q)
        T = random_lists(rng, T, beta)
        pin = EMPTY
        root_edges = {e for e, _ in T.children[T.root]}
        cand = [e for e in T.edge_ids if e not in root_edges]
        if cand and rng.random() < 0.5:
            e = rng.choice(cand)
            pin = Pinning.on(T, {e: T.lists[e][0]})
        laws = compose_tree(T, exact.pinned_lists(T, pin))
        direct = exact.tree_broom_marginal(T, pin, T.root)
        via = laws[T.root].normalize().to_table()
        if via.entries != direct.entries:
            bad.append(k)
    return not bad, {"trees": n, "mismatches": bad}


def recursion_equals_marginal(seed: int = 2) -> CriterionResult:
    return _timed(2, "broom recursion equals conditional broom marginal", _recursion, seed)


def _bounds(seed: int, n: int = 500):
    rng = random.Random(seed)
    violations = []
    checked = 0
    for k in range(n):
        delta = rng.choice((3, 4))
        beta = rng.randint(2, delta + 6)
        q = 2 * delta - 2 + beta + rng.randint(0, 2)
        T = bounded_depth_tree(rng, rng.randint(2, 7), delta, 3, q)
        T = random_lists(rng, T, beta)
        audit = exact.marginal_bound_audit(T)
        checked += audit.checked
        if not audit.passed:
            violations.append({"instance": k, "first": audit.violations[0]})
        laws = compose_tree(T)
        kids = [w for _, w in T.children[T.root]]
        children = [laws[w].normalize() for w in kids]
        root = laws[T.root]
        step_beta = validate(T).beta
        res = check_condition_marginal(children, root, step_beta)
        checked += 1
        if not res["passed"]:
            violations.append({"instance": k, "first": res["witnesses"][0]})
    return not violations, {"instances": n, "checks": checked, "violations": violations[:5]}


def marginal_bound_battery(seed: int = 3) -> CriterionResult:
    return _timed(3, "marginal bound battery", _bounds, seed)


def _worst():
    rows = []
    ok = True
    for delta, q in ((3, 9), (3, 12), (4, 12), (4, 16)):
        w = spectral.worst_pinning_instance(delta, q)
        closed = float(w.closed_form)
        nb = spectral.spectral_norm(spectral.matrix_B(w.children, w.root))
        nj = spectral.spectral_norm(spectral.jacobian(w.children, w.root).J_phi_full) ** 2
        err = max(abs(nb - closed), abs(nj - closed)) / closed
        ok &= err <= 1e-9
        rows.append({"delta": delta, "q": q, "closed_form": w.closed_form, "norm_B": nb,
                     "norm_J_sq": nj, "rel_err": err})
    return ok, {"rows": rows}


def worst_pinning_spectrum() -> CriterionResult:
    return _timed(4, "worst-pinning spectrum matches closed form", _worst)


def _reduction(seed: int, n: int = 50):
    rng = random.Random(seed)
    worst_trace, worst_gap, worst_fact = 0.0, -math.inf, 0.0
    ok = True
    for _ in range(n):
        beta = rng.randint(2, 6)
        _, children, root_lists = random_step(rng, 3, beta)
        rep = spectral.dimension_reduction_audit(children, root_lists, k_max=4)
        fact = spectral.factorization_residual(children, root_lists)
        worst_trace = max(worst_trace, rep.max_trace_rel_err)
        worst_gap = max(worst_gap, rep.lambda_max_A - rep.norm_B)
        worst_fact = max(worst_fact, fact)
        ok &= rep.max_trace_rel_err <= 1e-9 and rep.lambda_max_A <= rep.norm_B + 1e-9 and fact <= 1e-12
    return ok, {"inputs": n, "max_trace_rel_err": worst_trace, "max_lambdaA_minus_normB": worst_gap,
                "max_factorization_residual": worst_fact}


def dimension_reduction_chain(seed: int = 5) -> CriterionResult:
    return _timed(5, "dimension-reduction chain", _reduction, seed)


def _jacobian(seed: int, n: int = 50):
    rng = random.Random(seed)
    worst = 0.0
    for k in range(n):
        delta = rng.choice((3, 4))
        _, children, root_lists = random_step(rng, delta, rng.randint(2, 5), root_degree=rng.randint(1, 3))
        res = spectral.finite_difference_check([c.as_float() for c in children], root_lists, directions=10, seed=seed + k)
        worst = max(worst, res["max_relative_error"])
    return worst <= 1e-5, {"instances": n, "max_relative_error": worst}


def jacobian_finite_differences(seed: int = 6) -> CriterionResult:
    return _timed(6, "Jacobian agrees with finite differences", _jacobian, seed)


def _coupling(max_edges: int):
    bound = Fraction(3)
    cases = 0
    worst = Fraction(0)
    failures = []
    for inst, i, a, b, mult in coupling.small_pendant_cases(max_edges=max_edges, q_max=7, eps=1):
        rep = coupling.greedy_decomposition(inst, i, a, b, with_w1=False)
        full = coupling.full_discrepancy(inst, i, a, b)
        cases += 1
        worst = max(worst, full["w_full"])
        if rep.decomposition_residual != 0 or not rep.conditioned_equal or full["w_full"] > bound:
            failures.append({"lists": [inst.lists[e] for e in inst.edge_ids], "a": a, "b": b})
    return not failures, {"representatives": cases, "max_w1": worst, "bound": bound, "failures": failures[:5]}


def coupling_decomposition(max_edges: int = 7) -> CriterionResult:
    return _timed(7, "coupling decomposition and W1 bound", _coupling, max_edges)


def _wsm():
    detail = {}
    ok = True
    for delta, q in ((3, 4), (4, 6)):
        h = mixing.hardness_witness(delta, 2, q)
        root = mixing.root_edge(h["instance"])
        detail[f"hardness_{delta}_{q}"] = {"root_tv": h["tv"][root], "parity_ok": h["parity_ok"]}
        ok &= h["tv"][root] == 1 and h["parity_ok"]
    rep = mixing.wsm_experiment(3, 5, range(2, 7))
    decreasing = all(x > y for x, y in zip(rep.tv, rep.tv[1:]))
    ok &= decreasing and rep.fitted_rate is not None and rep.fitted_rate <= 12 / 13 and rep.passed
    detail["decay_3_5"] = {"tv": rep.tv, "fitted_rate": rep.fitted_rate, "strictly_decreasing": decreasing}
    return ok, detail


def wsm_threshold() -> CriterionResult:
    return _timed(8, "WSM threshold witness and decay", _wsm)


def _contraction(seed: int, n: int = 100):
    rng = random.Random(seed)
    violations, worst_ratio = 0, 0.0
    for k in range(n):
        dev = Fraction(1, 1000) if k % 2 == 0 else Fraction(1, 100)
        q = 7 if (k // 2) % 2 == 0 else 9
        d = rng.randint(1, 2)
        res = mixing.wsm_contraction_check(mixing.perturbed_children(rng, d, q, dev), q, dev)
        violations += not res["passed"]
        if res["bound"]:
            worst_ratio = max(worst_ratio, float(res["observed"] / res["bound"]))
    return violations == 0, {"configurations": n, "violations": violations, "max_observed_over_bound": worst_ratio}


def wsm_contraction(seed: int = 9) -> CriterionResult:
    return _timed(9, "one-step WSM contraction", _contraction, seed)


def _trickledown(seed: int, brooms: int = 3, delta: int = 3, constraint: str = "printed"):
    beta = delta + 50
    rows = []
    ok = True
    for k in range(brooms):
        T, B, v = trickledown.weighted_broom_tree(random.Random(seed + k), delta, 3, beta)
        st = trickledown.build_complex(T, B, v)
        rep = trickledown.verify_certificate(st, constraint, base_links=50, seed=seed + k)
        fin = trickledown.final_bound_check(st)
        good = rep.passed and fin["passed"] and fin["pi_identity"] and fin["cov_identity"]
        ok &= good
        rows.append({
            "seed": seed + k, "constraint": constraint, "b": rep.coefficients.b,
            "base_case_min_margin": rep.min_margin("base_case"),
            "expectation_min_margin": rep.min_margin("expectation_step"),
            "upper_min_margin": rep.min_margin("upper_by_pi"),
            "lambda_times_d_minus_1": fin["lambda_times_d_minus_1"], "eta": fin["eta"],
            "identities": fin["pi_identity"] and fin["cov_identity"], "passed": good,
        })
    return ok, {"brooms": rows, "log_base": "natural"}


def trickledown_certificate(seed: int = 10, constraint: str = "printed") -> CriterionResult:
    return _timed(10, f"trickle-down certificate ({constraint} b_k constraints)", _trickledown, seed,
                  constraint=constraint)


def _si(seed: int, n: int = 20, delta: int = 3):
    rng = random.Random(seed)
    beta = delta + 50
    eta = spectral.eta_formula(delta)
    measured = []
    for _ in range(n):
        _, children, root_lists = random_step(rng, delta, beta, root_degree=2)
        p = recurse(children, root_lists).normalize()
        measured.append(spectral.covariance(p, delta).measured_si_constant)
    worst = max(measured)
    return worst <= 1 + eta, {"brooms": n, "max_measured_si": worst, "bound": 1 + eta, "measured": measured}


def spectral_independence(seed: int = 11) -> CriterionResult:
    return _timed(11, "measured spectral independence below 1+eta", _si, seed)


ALL = (
    counting_oracle,
    recursion_equals_marginal,
    marginal_bound_battery,
    worst_pinning_spectrum,
    dimension_reduction_chain,
    jacobian_finite_differences,
    coupling_decomposition,
    wsm_threshold,
    wsm_contraction,
    trickledown_certificate,
    spectral_independence,
)


def run_all(jobs: int = 1) -> list[CriterionResult]:
    if jobs <= 1:
        return [fn() for fn in ALL]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn) for fn in ALL]
        return [f.result() for f in futures]
