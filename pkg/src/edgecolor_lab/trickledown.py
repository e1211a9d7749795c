"""Matrix trickle-down certificates for the broom-coloring simplicial complex.

The complex lives on one broom K = E(v) of a weighted tree instance. Its facets are the
proper colorings of K weighted by μ_K, which factorizes as ∏_e p_{e,c_e} over injective
colorings, p_{e,c} being the weighted number of colorings of the subtree hanging below e
when e takes color c. Links, walks and certificate matrices are all computed from p.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Mapping

import numpy as np

from .exact import (
    DistributionTable,
    WeightedBoundary,
    broom_colorings,
    joint,
    subtree_tables,
    sweep,
    weighted_marginal,
)
from .instance import Instance, Pinning, StructuralError, apply_pinning, tree_from_parents, validate
from .spectral import eta_formula

LINK_CAP = 60
EIG_TOL = 1e-9


class CodimensionError(ValueError):
    pass


class SizeCapError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# the complex

@dataclass
class ComplexState:
    instance: Instance
    boundary: WeightedBoundary
    K: tuple[str, ...]
    lists: dict[str, tuple[int, ...]]
    p: dict[str, dict[int, int]]
    beta: int
    delta: int
    colors: tuple[int, ...] = ()

    @property
    def d(self) -> int:
        return len(self.K)

    @property
    def universe(self) -> list[tuple[str, int]]:
        return [(e, c) for e in self.K for c in self.lists[e] if self.p[e].get(c, 0)]

    def facets(self) -> dict[tuple[int, ...], int]:
        """Unnormalized facet weights ∏ p_{e,c_e} over injective colorings of K."""
        out = {}
        for tau in broom_colorings([self.lists[e] for e in self.K]):
            w = 1
            for e, c in zip(self.K, tau):
                w *= self.p[e].get(c, 0)
                if not w:
                    break
            if w:
                out[tau] = w
        return out

    def mu_K(self) -> DistributionTable:
        table = DistributionTable(self.K, {k: Fraction(v) for k, v in self.facets().items()})
        return table.normalized()


def _region_brooms(instance: Instance, boundary: WeightedBoundary):
    """Map vertex → weight dict on its child broom if every region is a full child broom, else None."""
    out = {}
    for edges, w in boundary.regions:
        tops = set()
        for e in edges:
            a, b = instance.ends[e]
            tops.add(a if instance.depth[a] < instance.depth[b] else b)
        if len(tops) != 1:
            return None
        (u,) = tops
        broom = instance.broom(u)
        if set(broom) != set(edges):
            return None
        order = [edges.index(e) for e in broom]
        lists = [instance.lists[e] for e in broom]
        table = {}
        for tau in broom_colorings(lists):
            cfg = [0] * len(edges)
            for k, c in zip(order, tau):
                cfg[k] = c
            wt = w(tuple(cfg)) if callable(w) else w.get(tuple(cfg), 0)
            if wt:
                table[tau] = wt
        out[u] = table
    return out


def build_complex(instance: Instance, boundary: WeightedBoundary, v: str) -> ComplexState:
    """Complex on K = E(v); the tree is re-rooted at v so K is the root broom."""
    tree = instance.with_root(v)
    boundary.check(tree)
    K = tree.broom(v)
    if len(K) < 1:
        raise StructuralError("the broom is empty")
    bedges = boundary.edges
    near = set(K) | {f for e in K for f in tree.adjacent[e]}
    if bedges & near:
        raise StructuralError("the broom must be neither in nor adjacent to a boundary region")
    brooms = _region_brooms(tree, boundary)
    p: dict[str, dict[int, int]] = {}
    if brooms is not None:
        tables = subtree_tables(tree, None, brooms)
        for e, u in tree.children[v]:
            total = sum(tables[u].values())
            present = {}
            for tau, w in tables[u].items():
                for c in tau:
                    present[c] = present.get(c, 0) + w
            p[e] = {c: total - present.get(c, 0) for c in tree.lists[e]}
    else:
        for e, u in tree.children[v]:
            below = tree.subtree_vertices(u)
            keep = [e] + [f for f in tree.edge_ids if set(tree.ends[f]) <= below]
            sub = tree.restrict_edges(keep)
            regions = tuple(r for r in boundary.regions if set(r[0]) <= set(keep))
            counts = sweep(sub, sub.lists, (e,), WeightedBoundary(regions))
            p[e] = {c: counts.get((c,), 0) for c in tree.lists[e]}
    lists = {e: tree.lists[e] for e in K}
    colors = tuple(sorted({c for e in K for c in lists[e]}))
    return ComplexState(tree, boundary, K, lists, p, validate(tree).beta, tree.max_degree, colors)


def product_form_matches(state: ComplexState) -> bool:
    """μ_K from the p-factorization equals the weighted marginal computed by the sweep engine."""
    direct = weighted_marginal(state.instance, state.boundary, Pinning({}), state.K)
    return direct.entries == state.mu_K().entries


def mixture_identity(instance: Instance, boundary: WeightedBoundary) -> bool:
    """Weighted law = Σ_ω μ_B(ω) · uniform law conditioned on ω, B the union of boundary regions."""
    B = tuple(e for es, _ in boundary.regions for e in es)
    full = weighted_marginal(instance, boundary, Pinning({}), instance.edge_ids)
    mix_B = weighted_marginal(instance, boundary, Pinning({}), B)
    acc: dict[tuple[int, ...], Fraction] = {}
    for omega, w in mix_B.entries.items():
        pin = Pinning(dict(zip(B, omega)))
        cond = joint(instance, pin)
        for rest, pr in cond.entries.items():
            cfg = dict(zip(cond.support_edges, rest))
            cfg.update(pin.assignments)
            key = tuple(cfg[e] for e in instance.edge_ids)
            acc[key] = acc.get(key, Fraction(0)) + w * pr
    return {k: v for k, v in acc.items() if v} == full.entries


# ---------------------------------------------------------------------------
# links

@dataclass
class Link:
    tau: dict[str, int]
    free: tuple[str, ...]
    X: list[tuple[str, int]]
    mu1: np.ndarray
    mu2: np.ndarray
    exact: bool

    @property
    def k(self) -> int:
        return len(self.free)

    @property
    def pi(self) -> np.ndarray:
        return self.mu1 / self.k

    @property
    def Pi(self) -> np.ndarray:
        return _diag(self.pi, self.exact)

    @property
    def PiP(self) -> np.ndarray:
        if self.k == 1:
            raise CodimensionError("ΠP needs at least two free edges")
        return self.mu2 / (self.k * (self.k - 1))

    def walk(self) -> np.ndarray:
        if self.k == 1:
            # down to τ and back up: the conditional law of the single free edge
            return np.tile(self.pi, (len(self.X), 1))
        return self.mu2 / ((self.k - 1) * self.mu1[:, None])


def _diag(v, exact):
    n = len(v)
    M = _zeros(n, exact)
    for i in range(n):
        M[i, i] = v[i]
    return M


def _zeros(n, exact):
    if exact:
        M = np.empty((n, n), dtype=object)
        M.fill(Fraction(0))
        return M
    return np.zeros((n, n))


def _pvec(state: ComplexState, e: str, used: set[int], exact: bool):
    vals = [state.p[e].get(c, 0) if c not in used else 0 for c in state.colors]
    if exact:
        return np.array([Fraction(x) for x in vals], dtype=object)
    top = max(vals) or 1
    return np.array([x / top for x in vals], dtype=float)


def _check_tau(state: ComplexState, tau: Mapping[str, int]):
    for e, c in tau.items():
        if e not in state.K or c not in state.lists[e]:
            raise ValueError(f"({e}, {c}) is not an element of the complex")
    if len(set(tau.values())) != len(tau):
        raise ValueError("a face may not repeat a color")


def link(state: ComplexState, tau: Mapping[str, int], exact: bool = False) -> Link:
    """Normalized one- and two-element inclusion probabilities of the link of τ."""
    _check_tau(state, tau)
    used = set(tau.values())
    free = tuple(e for e in state.K if e not in tau)
    k = len(free)
    if k < 1:
        raise CodimensionError("a facet has an empty link")
    C = len(state.colors)
    if exact and C ** k > 2 * 10**6:
        raise SizeCapError("exact link tensor too large")
    vecs = [_pvec(state, e, used, exact) for e in free]
    W = vecs[0].reshape((C,) + (1,) * (k - 1))
    for i in range(1, k):
        W = W * vecs[i].reshape((1,) * i + (C,) + (1,) * (k - 1 - i))
    grids = np.indices((C,) * k)
    mask = np.ones((C,) * k, dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            mask &= grids[i] != grids[j]
    W = np.where(mask, W, Fraction(0) if exact else 0.0)
    Z = W.sum()
    if Z == 0:
        raise ValueError("link of τ is empty")
    W = W / Z
    X = [(e, c) for i, e in enumerate(free) for ci, c in enumerate(state.colors) if vecs[i][ci] != 0]
    pos = {x: n for n, x in enumerate(X)}
    n = len(X)
    mu1 = np.empty(n, dtype=object) if exact else np.zeros(n)
    mu2 = _zeros(n, exact)
    for i, e in enumerate(free):
        axes = tuple(a for a in range(k) if a != i)
        m = W.sum(axis=axes) if axes else W
        for ci, c in enumerate(state.colors):
            if (e, c) in pos:
                mu1[pos[e, c]] = m[ci]
        for j in range(i + 1, k):
            f = free[j]
            axes2 = tuple(a for a in range(k) if a not in (i, j))
            m2 = W.sum(axis=axes2) if axes2 else W
            for ci, c in enumerate(state.colors):
                if (e, c) not in pos:
                    continue
                for cj, c2 in enumerate(state.colors):
                    if (f, c2) in pos:
                        val = m2[ci, cj]
                        mu2[pos[e, c], pos[f, c2]] = val
                        mu2[pos[f, c2], pos[e, c]] = val
    return Link(dict(tau), free, X, mu1, mu2, exact)


def reversibility_holds(lk: Link) -> bool:
    P = lk.walk()
    D = lk.pi[:, None] * P
    ok = bool(np.all(D == D.T)) if lk.exact else bool(np.allclose(D, D.T, atol=1e-15))
    rows = P.sum(axis=1)
    ok &= all(r == 1 for r in rows) if lk.exact else bool(np.allclose(rows, 1.0))
    return ok


# ---------------------------------------------------------------------------
# weighted quantities

def weighted_quantities(state: ComplexState, tau: Mapping[str, int] = {}) -> dict:
    """p^τ_{e,c}, q^τ_e, q^τ_{e,f} with the two bounds on them; exact rationals."""
    _check_tau(state, tau)
    used = set(tau.values())
    free = [e for e in state.K if e not in tau]
    p = {e: {c: Fraction(state.p[e].get(c, 0)) for c in state.lists[e] if c not in used} for e in free}
    q = {e: sum(p[e].values(), Fraction(0)) for e in free}
    qq = {}
    for e, f in itertools.combinations(free, 2):
        qq[e, f] = sum((p[e][c] * p[f][c] for c in p[e] if c in p[f]), Fraction(0))
    beta = state.beta
    ratio_beta, ratio_len, pair = [], [], []
    for e in free:
        ell = len(p[e])
        for c, v in p[e].items():
            if q[e]:
                ratio_beta.append(Fraction(1, beta) - v / q[e])
                ratio_len.append(Fraction(1, ell) - v / q[e])
    for (e, f), v in qq.items():
        pair.append(q[e] * q[f] / beta - v)
    return {
        "p": p, "q": q, "q_pair": qq,
        "ratio_le_inv_beta": all(s >= 0 for s in ratio_beta),
        "ratio_le_inv_list": all(s >= 0 for s in ratio_len),
        "pair_le_product_over_beta": all(s >= 0 for s in pair),
        "min_slack_ratio_beta": min(ratio_beta, default=None),
        "min_slack_ratio_list": min(ratio_len, default=None),
        "min_slack_pair": min(pair, default=None),
    }


def weighted_marginal_bounds(state: ComplexState, tau: Mapping[str, int]) -> dict:
    """Upper bound on a color appearing on the free part of K and the lower bound on single marginals."""
    lk_k = [e for e in state.K if e not in tau]
    k = len(lk_k)
    used = set(tau.values())
    facets = state.facets()
    rows = [(cfg, w) for cfg, w in facets.items()
            if all(cfg[state.K.index(e)] == c for e, c in tau.items())]
    Z = sum(w for _, w in rows)
    beta = state.beta
    delta = state.delta
    pinned = apply_pinning(state.instance, Pinning(dict(tau)))
    lower_ok, upper_ok = True, True
    worst_lower, worst_upper = None, None
    for e in lk_k:
        ell = len([c for c in state.lists[e] if c not in used])
        lb = Fraction((beta - 1) ** 2, (beta + k - 2) * (beta + delta - 2)) / (ell - k + 1)
        for c in state.lists[e]:
            if c in used:
                continue
            m = Fraction(sum(w for cfg, w in rows if cfg[state.K.index(e)] == c), Z)
            s = m - lb
            worst_lower = s if worst_lower is None else min(worst_lower, s)
            lower_ok &= s >= 0
    if k:
        beta_F = min(len(pinned.lists[e]) - pinned.edge_degree(e) for e in lk_k)
        ub = Fraction(k, beta_F - 1 + k) if beta_F - 1 + k > 0 else Fraction(1)
        for a in state.colors:
            m = Fraction(sum(w for cfg, w in rows if a in cfg and a not in used), Z)
            s = ub - m
            worst_upper = s if worst_upper is None else min(worst_upper, s)
            upper_ok &= s >= 0
    return {"lower_ok": lower_ok, "upper_ok": upper_ok, "worst_lower": worst_lower, "worst_upper": worst_upper}


# ---------------------------------------------------------------------------
# coefficients

@dataclass
class Coefficients:
    delta: int
    beta: int
    gamma: Fraction
    C: Fraction
    eta: float
    a: dict[int, Fraction]
    b: dict[int, float]
    feasible: bool
    first_failure: int | None
    constraint: str = "printed"
    log_base: str = "natural"


CONSTRAINTS = ("printed", "derived")


def coefficient_sequences(delta: int, beta: int, kmax: int | None = None,
                          constraint: str = "printed") -> Coefficients:
    """a_k in closed form and b_k as the minimal root of the quadratic constraint, k = 3..kmax.

    "printed" budgets C(k−1)/(β−1)² for the neighbour-averaged A terms. "derived" adds the
    8γ(k−1)/(β−1) adjacency bound those terms actually need; see the README.
    """
    if delta < 3 or beta < 2:
        raise ValueError("need Δ ≥ 3 and β ≥ 2")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"constraint must be one of {CONSTRAINTS}")
    kmax = delta if kmax is None else kmax
    g = (1 + Fraction(delta - 1, beta - 1)) ** 3 / (beta - 1)
    C = 8 * g * delta * (Fraction(2, beta - 1) + 1)
    a = {k: 1 / (1 + 4 * g * (k - 2)) for k in range(2, kmax + 1)}
    b = {2: 2 / (beta - 1) ** 2}
    feasible, failure = b[2] <= 0.1, None if b[2] <= 0.1 else 2
    for k in range(3, kmax + 1):
        if not feasible:
            break
        const = (k - 1) * b[k - 1] + float(C) * (k - 1) / (beta - 1) ** 2
        if constraint == "derived":
            const += 8 * float(g) * (k - 1) / (beta - 1)
        disc = (k - 2) ** 2 - 8 * const
        if disc < 0:
            feasible, failure = False, k
            break
        root = ((k - 2) - math.sqrt(disc)) / 4
        b[k] = root
        if root > 0.1:
            feasible, failure = False, k
    return Coefficients(delta, beta, g, C, eta_formula(delta), a, b, feasible, failure, constraint)


# ---------------------------------------------------------------------------
# certificate matrices

def _pad(M, X_small, X_big, exact):
    pos = {x: n for n, x in enumerate(X_big)}
    idx = [pos[x] for x in X_small]
    out = _zeros(len(X_big), exact)
    out[np.ix_(idx, idx)] = M
    return out


def _base_A(state: ComplexState, tau: Mapping[str, int], X, exact: bool):
    """Off-diagonal same-color block −p_{e,c}p_{f,c}/(2(q_e q_f − q_{e,f})) on a codim-2 link."""
    used = set(tau.values())
    e, f = [x for x in state.K if x not in tau]
    conv = Fraction if exact else float
    pe = {c: conv(state.p[e].get(c, 0)) for c in state.lists[e] if c not in used}
    pf = {c: conv(state.p[f].get(c, 0)) for c in state.lists[f] if c not in used}
    if not exact:
        se, sf = max(pe.values()) or 1.0, max(pf.values()) or 1.0
        pe = {c: v / se for c, v in pe.items()}
        pf = {c: v / sf for c, v in pf.items()}
    qe, qf = sum(pe.values()), sum(pf.values())
    qef = sum(pe[c] * pf[c] for c in pe if c in pf)
    Z = qe * qf - qef
    pos = {x: n for n, x in enumerate(X)}
    A = _zeros(len(X), exact)
    for c in pe:
        if (e, c) in pos and (f, c) in pos:
            v = -pe[c] * pf[c] / (2 * Z)
            A[pos[e, c], pos[f, c]] = v
            A[pos[f, c], pos[e, c]] = v
    return A


class Certificate:
    """A_τ, M_τ for a fixed complex and coefficient family, with link caching."""

    def __init__(self, state: ComplexState, coeffs: Coefficients, exact: bool = False):
        self.state = state
        self.coeffs = coeffs
        self.exact = exact
        self._links: dict[tuple, Link] = {}
        self._A: dict[tuple, np.ndarray] = {}

    def link(self, tau) -> Link:
        key = tuple(sorted(tau.items()))
        if key not in self._links:
            self._links[key] = link(self.state, tau, self.exact)
        return self._links[key]

    def A(self, tau) -> np.ndarray:
        key = tuple(sorted(tau.items()))
        if key in self._A:
            return self._A[key]
        lk = self.link(tau)
        k = lk.k
        if k == 2:
            A = _base_A(self.state, tau, lk.X, self.exact)
        else:
            a_k = self.coeffs.a[k] if self.exact else float(self.coeffs.a[k])
            A = _zeros(len(lk.X), self.exact)
            for sigma, w in _faces(self, tau, k - 2):
                t2 = dict(tau)
                t2.update(sigma)
                A = A + w * _pad(self.A(t2), self.link(t2).X, lk.X, self.exact)
            A = A * (a_k * (k - 1))
        self._A[key] = A
        return A

    def M(self, tau) -> np.ndarray:
        lk = self.link(tau)
        k = lk.k
        b = self.coeffs.b[k]
        if self.exact:
            raise ValueError("M involves irrational b_k; use float mode")
        return (self.A(tau) + b * lk.Pi) / (k - 1)


def _faces(cert: Certificate, tau, j: int):
    """(σ, π_{τ,j}(σ)) over j-element faces of the link of τ."""
    lk = cert.link(tau)
    k = lk.k
    if j == 1:
        for n, (e, c) in enumerate(lk.X):
            yield {e: c}, lk.mu1[n] / k
        return
    used = set(tau.values())
    free = lk.free
    st = cert.state
    conv = (lambda v: Fraction(v)) if cert.exact else float
    weights = {}
    Z = 0
    for cfg in broom_colorings([[c for c in st.lists[e] if c not in used] for e in free]):
        w = 1
        for e, c in zip(free, cfg):
            w *= st.p[e].get(c, 0)
        if not w:
            continue
        w = conv(w)
        Z += w
        for idx in itertools.combinations(range(k), j):
            key = tuple((free[i], cfg[i]) for i in idx)
            weights[key] = weights.get(key, 0) + w
    for key, w in weights.items():
        yield dict(key), w / Z / comb(k, j)


def _whiten(M, pi):
    s = 1.0 / np.sqrt(pi)
    return M * s[:, None] * s[None, :]


def _sym_eigs(M):
    return np.linalg.eigvalsh((M + M.T) / 2)


@dataclass
class CheckRecord:
    tau: dict
    codim: int
    inequality: str
    margin: float
    passed: bool


def base_case_check(state: ComplexState, tau: Mapping[str, int], coeffs: Coefficients | None = None) -> CheckRecord:
    """eigmin(M_τ − (Π_τP_τ − 2π_τπ_τᵀ)) on a codim-2 link."""
    free = [e for e in state.K if e not in tau]
    if len(free) != 2:
        raise CodimensionError("base case needs exactly two free edges")
    coeffs = coeffs or coefficient_sequences(max(state.delta, 3), state.beta, 2)
    cert = Certificate(state, coeffs)
    lk = cert.link(tau)
    L = lk.PiP - 2 * np.outer(lk.pi, lk.pi)
    M = cert.M(tau)
    margin = float(_sym_eigs(M - L).min())
    scale = 1.0 + float(np.linalg.norm(L, 2))
    return CheckRecord(dict(tau), 2, "base_case", margin, margin >= -1e-12 * scale)


def induction_check(cert: Certificate, tau: Mapping[str, int]) -> list[CheckRecord]:
    lk = cert.link(tau)
    k = lk.k
    if k < 3:
        raise CodimensionError("induction applies from codimension 3")
    if len(lk.X) > LINK_CAP * cert.state.d * 4:
        raise SizeCapError("link too large for dense checks")
    M = cert.M(tau)
    Pi_inv = np.diag(1.0 / lk.pi)
    rhs = M - ((k - 1) / (k - 2)) * M @ Pi_inv @ M
    lhs = np.zeros_like(M)
    for n, (e, c) in enumerate(lk.X):
        t2 = dict(tau)
        t2[e] = c
        lhs += (lk.mu1[n] / k) * _pad(cert.M(t2), cert.link(t2).X, lk.X, False)
    W1 = _whiten(rhs - lhs, lk.pi)
    m1 = float(_sym_eigs(W1).min())
    s1 = 1.0 + float(np.abs(_sym_eigs(_whiten(rhs, lk.pi))).max())
    W2 = _whiten(M, lk.pi)
    m2 = (k - 1) / (3 * k - 1) - float(_sym_eigs(W2).max())
    return [
        CheckRecord(dict(tau), k, "expectation_step", m1, m1 >= -EIG_TOL * s1),
        CheckRecord(dict(tau), k, "upper_by_pi", m2, m2 >= -EIG_TOL),
    ]


def upper_check(cert: Certificate, tau) -> CheckRecord:
    lk = cert.link(tau)
    k = lk.k
    m = (k - 1) / (3 * k - 1) - float(_sym_eigs(_whiten(cert.M(tau), lk.pi)).max())
    return CheckRecord(dict(tau), k, "upper_by_pi", m, m >= -EIG_TOL)


def _faces_of_size(cert: Certificate, j: int) -> list[dict]:
    if j == 0:
        return [{}]
    return [sigma for sigma, w in _faces(cert, {}, j) if w > 0]


@dataclass
class CertificateReport:
    constraint: str
    coefficients: Coefficients
    records: list[CheckRecord]

    @property
    def passed(self) -> bool:
        return bool(self.records) and all(r.passed for r in self.records)

    def min_margin(self, inequality: str) -> float | None:
        ms = [r.margin for r in self.records if r.inequality == inequality]
        return min(ms) if ms else None


def verify_certificate(state: ComplexState, constraint: str = "printed", base_links: int = 50,
                       max_links: int = 200, seed: int = 0) -> CertificateReport:
    """Base case on sampled codim-2 links; induction and upper bound on codim ≥ 3 links.

    Links beyond the sampling budget are drawn with a seeded RNG.
    """
    d = state.d
    coeffs = coefficient_sequences(max(state.delta, 3, d), state.beta, max(d, 2), constraint)
    cert = Certificate(state, coeffs)
    rng = random.Random(seed)
    records = []
    if d >= 2:
        taus = _faces_of_size(cert, d - 2)
        if len(taus) > base_links:
            taus = rng.sample(taus, base_links)
        records += [base_case_check(state, t, coeffs) for t in taus]
    for k in range(3, d + 1):
        if k not in coeffs.b:
            records.append(CheckRecord({}, k, "coefficients_feasible", float("-inf"), False))
            break
        taus = _faces_of_size(cert, d - k)
        if len(taus) > max_links:
            taus = rng.sample(taus, max_links)
        for t in taus:
            records += induction_check(cert, t)
    return CertificateReport(constraint, coeffs, records)


def consistency_identity(state: ComplexState, coeffs: Coefficients, tau: Mapping[str, int] = {}) -> dict:
    """Exact checks E_x[A_{τ∪x}] = ((k−2)/(k−1))(a_{k−1}/a_k)A_τ and E_x[Π_{τ∪x}] = Π_τ."""
    cert = Certificate(state, coeffs, exact=True)
    lk = cert.link(tau)
    k = lk.k
    if k < 3:
        raise CodimensionError("identity needs codimension at least 3")
    EA = _zeros(len(lk.X), True)
    EPi = _zeros(len(lk.X), True)
    for n, (e, c) in enumerate(lk.X):
        t2 = dict(tau)
        t2[e] = c
        w = lk.mu1[n] / k
        X2 = cert.link(t2).X
        EA = EA + w * _pad(cert.A(t2), X2, lk.X, True)
        EPi = EPi + w * _pad(cert.link(t2).Pi, X2, lk.X, True)
    target = Fraction(k - 2, k - 1) * (coeffs.a[k - 1] / coeffs.a[k]) * cert.A(tau)
    return {"A_identity": bool(np.all(EA == target)), "Pi_identity": bool(np.all(EPi == lk.Pi))}


def final_bound_check(state: ComplexState, eta: float | None = None, exact_identities: bool = True) -> dict:
    d = state.d
    if d < 2:
        raise CodimensionError("final bound needs a broom with at least two edges")
    eta = eta_formula(max(state.delta, 2)) if eta is None else eta
    lk = link(state, {}, exact=False)
    L = lk.PiP - (d / (d - 1)) * np.outer(lk.pi, lk.pi)
    lam = float(_sym_eigs(_whiten(L, lk.pi)).max())
    out = {"lambda": lam, "lambda_times_d_minus_1": lam * (d - 1), "eta": eta,
           "margin": eta - lam * (d - 1), "passed": lam * (d - 1) <= eta + EIG_TOL, "log_base": "natural"}
    if exact_identities:
        out.update(lemma_identities(state))
    return out


def lemma_identities(state: ComplexState) -> dict:
    """Π(μ_K) = dΠ and Cov(μ_K) = d((d−1)(ΠP − d/(d−1)ππᵀ) + Π), exactly.

    The left sides come straight from the facet table; the right sides from the link machinery.
    """
    d = state.d
    lk = link(state, {}, exact=True)
    pos = {x: n for n, x in enumerate(lk.X)}
    facets = state.facets()
    Z = sum(facets.values())
    n = len(lk.X)
    mean = [Fraction(0)] * n
    second: dict[tuple[int, int], int] = {}
    for cfg, w in facets.items():
        idx = [pos[e, c] for e, c in zip(state.K, cfg)]
        for i in idx:
            mean[i] += w
            for j in idx:
                second[i, j] = second.get((i, j), 0) + w
    mean = [m / Z for m in mean]
    Pi = lk.Pi
    ok_pi = all(mean[i] == d * Pi[i, i] for i in range(n))
    rhs = d * ((d - 1) * (lk.PiP - Fraction(d, d - 1) * np.outer(lk.pi, lk.pi)) + Pi)
    ok_cov = True
    for i in range(n):
        for j in range(n):
            cov = Fraction(second.get((i, j), 0), Z) - mean[i] * mean[j]
            if cov != rhs[i, j]:
                ok_cov = False
                break
        if not ok_cov:
            break
    return {"pi_identity": ok_pi, "cov_identity": ok_cov}


# ---------------------------------------------------------------------------
# generator for the acceptance brooms

def weighted_broom_tree(rng: random.Random, delta: int, d: int, beta: int, q: int | None = None,
                        point_mass: bool = False) -> tuple[Instance, WeightedBoundary, str]:
    """Root of degree d, two further levels of branching Δ−1, weighted brooms at the bottom.

    Lists have size deg(e)+β drawn from [q]; each bottom broom carries integer weights
    in 1..9 (or a single unit mass when point_mass is set).
    """
    parents = []
    count = 1
    level = [0]
    for depth in range(3):
        nxt = []
        for u in level:
            for _ in range(d if depth == 0 else delta - 1):
                parents.append(u)
                nxt.append(count)
                count += 1
        level = nxt
    T = tree_from_parents(parents, 1)
    sizes = {e: T.edge_degree(e) + beta for e in T.edge_ids}
    q = q or max(sizes.values()) + 3
    lists = {e: tuple(sorted(rng.sample(range(1, q + 1), sizes[e]))) for e in T.edge_ids}
    T = Instance(q, T.vertices, T.edges, lists, T.root)
    regions = []
    for v in T.vertices:
        if T.depth[v] == 2:
            broom = T.broom(v)
            cfgs = list(broom_colorings([T.lists[e] for e in broom]))
            if point_mass:
                weights = {rng.choice(cfgs): 1}
            else:
                weights = {cfg: rng.randint(1, 9) for cfg in cfgs}
            regions.append((broom, weights))
    return T, WeightedBoundary(tuple(regions)), T.root
