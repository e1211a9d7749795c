"""Jacobians of the potential-transformed broom recursion and their spectral audits.

Everything here is float64. Row order of root colorings is lexicographic (as produced
by the recursion), and the (edge, color) index set X lists edges in broom order and
colors increasing within each list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .broom import BroomVector, potential_back, recurse
from .exact import broom_colorings, subtree_tables
from .instance import Instance, Pinning, apply_pinning

MATRIX_CAP = 5000


class SingularStep(ValueError):
    """Some child puts no mass on colorings avoiding a color that its root edge may take."""


class MatrixCapError(RuntimeError):
    pass


def psd_tolerance(lam_max: float) -> float:
    return 1e-9 * (1.0 + abs(lam_max))


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value via the symmetric eigenproblem of MᵀM."""
    if M.size == 0:
        return 0.0
    return math.sqrt(max(0.0, float(np.linalg.eigvalsh(M.T @ M)[-1])))


def spectral_radius(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def eta_formula(delta: int) -> float:
    """The explicit slack η_Δ = (1 + (6 + 160/(Δ−1)) ln²Δ)/Δ + 1/Δ² (natural logarithm)."""
    L = math.log(delta)
    return (1 + (6 + 160 / (delta - 1)) * L * L) / delta + 1 / delta**2


# ---------------------------------------------------------------------------
# one recursion step in float form

class Step:
    """Dense float data for one application of the recursion."""

    def __init__(self, children: Sequence[BroomVector], root_lists: Sequence[Sequence[int]]):
        self.d = len(children)
        self.root_lists = [tuple(l) for l in root_lists]
        self.children = children
        self.Cr = list(broom_colorings(self.root_lists))
        self.X = [(i, c) for i in range(self.d) for c in self.root_lists[i]]
        self.xpos = {x: k for k, x in enumerate(self.X)}
        self.blocks = []
        start = 0
        for l in self.root_lists:
            self.blocks.append(slice(start, start + len(l)))
            start += len(l)
        # child data
        self.child_configs, self.child_p, self.missing = [], [], []
        for i, ch in enumerate(children):
            configs = list(ch.values)
            p = np.array([float(ch.values[t]) for t in configs])
            p = p / p.sum()
            lst = self.root_lists[i]
            miss = np.array([[0.0 if c in t else 1.0 for c in lst] for t in configs]).reshape(len(configs), len(lst))
            self.child_configs.append(configs)
            self.child_p.append(p)
            self.missing.append(miss)
        self.absent = [m.T @ p for m, p in zip(self.missing, self.child_p)]
        self.absent_pair = [m.T @ (p[:, None] * m) for m, p in zip(self.missing, self.child_p)]
        self.present = [1.0 - a for a in self.absent]
        # root law
        ncol = len(self.X)
        self.ind = np.zeros((len(self.Cr), ncol))
        w = np.ones(len(self.Cr))
        for r, pi in enumerate(self.Cr):
            for i, c in enumerate(pi):
                k = self.root_lists[i].index(c)
                self.ind[r, self.blocks[i].start + k] = 1.0
                w[r] *= self.absent[i][k]
        if w.sum() <= 0:
            raise SingularStep("all root colorings have zero weight")
        self.f = w / w.sum()
        self.pr = self.ind.T @ self.f

    def require_regular(self):
        for i, a in enumerate(self.absent):
            for k, val in enumerate(a):
                if val <= 0:
                    raise SingularStep(f"child {i} has zero mass avoiding color {self.root_lists[i][k]}")

    def ratio(self, i: int) -> np.ndarray:
        """p_i(c1-bar, c2-bar) / (p_i(c1-bar) p_i(c2-bar)) on L(e_i) × L(e_i)."""
        a = self.absent[i]
        return self.absent_pair[i] / np.outer(a, a)

    def joint_pairs(self) -> np.ndarray:
        return self.ind.T @ (self.f[:, None] * self.ind)

    def cov_root(self) -> np.ndarray:
        return self.joint_pairs() - np.outer(self.pr, self.pr)


# ---------------------------------------------------------------------------
# Jacobian bundle

@dataclass
class JacobianBundle:
    step: Step
    J_phi: list[np.ndarray]
    J_plain: list[np.ndarray]
    a_phi: list[np.ndarray]
    b_phi: list[np.ndarray]
    A: np.ndarray | None
    B: np.ndarray | None = None
    D_T: np.ndarray | None = None
    R: np.ndarray | None = None
    alpha: np.ndarray | None = None
    beta_vec: np.ndarray | None = None

    @property
    def J_phi_full(self) -> np.ndarray:
        return np.hstack(self.J_phi) if self.J_phi else np.zeros((len(self.step.Cr), 0))


def _step_of(children, root) -> Step:
    lists = root.lists if isinstance(root, BroomVector) else root
    return Step(children, lists)


def jacobian(children: Sequence[BroomVector], root, cap: int = MATRIX_CAP) -> JacobianBundle:
    """Blocks of J f and J f^φ at the children's current vectors.

    J_i f = Σ_c a_{i,c} b_{i,c}ᵀ with a_{i,c}(π) = f(π)(1{π(e_i)=c} − p_r(i,c)) and
    b_{i,c}(τ) = 1{c∉τ}/p_i(c̄); the potential version rescales rows by 1/√f and
    columns by √p_i.
    """
    st = _step_of(children, root)
    st.require_regular()
    J_phi, J_plain, a_list, b_list = [], [], [], []
    sqrt_f = np.sqrt(st.f)
    for i in range(st.d):
        blk = st.blocks[i]
        centered = st.ind[:, blk] - st.pr[blk][None, :]
        a_plain = st.f[:, None] * centered
        b_plain = st.missing[i] / st.absent[i][None, :]
        a_phi = sqrt_f[:, None] * centered
        b_phi = b_plain * np.sqrt(st.child_p[i])[:, None]
        J_plain.append(a_plain @ b_plain.T)
        J_phi.append(a_phi @ b_phi.T)
        a_list.append(a_phi)
        b_list.append(b_phi)
    A = None
    if len(st.Cr) <= cap:
        A = sum((J @ J.T for J in J_phi), np.zeros((len(st.Cr), len(st.Cr))))
    return JacobianBundle(st, J_phi, J_plain, a_list, b_list, A)


def potential_map(children: Sequence[BroomVector], root_lists, m_blocks: Sequence[np.ndarray]) -> np.ndarray:
    """f^φ evaluated at potential vectors m_i (aligned with the children's configuration order)."""
    new_children = []
    for ch, m in zip(children, m_blocks):
        configs = list(ch.values)
        vals = {t: potential_back(float(x)) if x >= 0 else (x / 2) ** 2 for t, x in zip(configs, m)}
        new_children.append(BroomVector(ch.broom, ch.lists, vals))
    root = recurse(new_children, root_lists)
    Cr = list(broom_colorings(root_lists))
    return np.array([2.0 * math.sqrt(float(root.values.get(pi, 0.0))) for pi in Cr])


def finite_difference_check(children, root, directions: int = 10, h: float = 1e-6, seed: int = 0) -> dict:
    """Compare J f^φ against central differences of f^φ along random directions."""
    bundle = jacobian(children, root)
    st = bundle.step
    rng = np.random.default_rng(seed)
    m0 = [2.0 * np.sqrt(p) for p in st.child_p]
    J = bundle.J_phi_full
    worst = 0.0
    for _ in range(directions):
        v = [rng.standard_normal(len(m)) for m in m0]
        vv = np.concatenate(v)
        vv /= np.linalg.norm(vv)
        pieces, start = [], 0
        for m in m0:
            pieces.append(vv[start:start + len(m)])
            start += len(m)
        plus = potential_map(children, st.root_lists, [m + h * d for m, d in zip(m0, pieces)])
        minus = potential_map(children, st.root_lists, [m - h * d for m, d in zip(m0, pieces)])
        fd = (plus - minus) / (2 * h)
        an = J @ vv
        scale = max(np.linalg.norm(an), np.linalg.norm(fd), 1e-300)
        err = np.linalg.norm(fd - an) / scale
        if np.linalg.norm(an) < 1e-12 and np.linalg.norm(fd) < 1e-8:
            err = 0.0
        worst = max(worst, float(err))
    return {"max_relative_error": worst, "passed": worst <= 1e-5}


# ---------------------------------------------------------------------------
# the reduced matrix B and its factorization

def matrix_B(children: Sequence[BroomVector], root) -> np.ndarray:
    """B((i,c2),(j,c4)) = Σ_{c3∈L(e_j)} ratio_j(c3,c4)·(p_r(j,c3,i,c2) − p_r(j,c3)p_r(i,c2))."""
    st = _step_of(children, root)
    st.require_regular()
    joint = st.joint_pairs()
    n = len(st.X)
    B = np.zeros((n, n))
    for j in range(st.d):
        blk = st.blocks[j]
        ratio = st.ratio(j)
        corr = joint[blk, :] - np.outer(st.pr[blk], st.pr)  # rows (j,c3), cols (i,c2)
        B[:, blk] = corr.T @ ratio
    return B


def covariance_blocks(children: Sequence[BroomVector], root) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Cov(p_r), D_T, R) with R the block diagonal of color-collapsed child covariances."""
    st = _step_of(children, root)
    st.require_regular()
    cov_r = st.cov_root()
    D = np.concatenate(st.absent) if st.absent else np.zeros(0)
    n = len(st.X)
    R = np.zeros((n, n))
    for i, ch in enumerate(children):
        blk = st.blocks[i]
        lst = st.root_lists[i]
        rep = covariance(BroomVector(ch.broom, ch.lists, {t: p for t, p in zip(st.child_configs[i], st.child_p[i])}, True))
        if rep.X:
            C = np.array([[1.0 if c == c2 else 0.0 for c2 in lst] for (_, c) in rep.X])
            R[blk, blk] = C.T @ rep.cov @ C
    return cov_r, D, R


def factorization_residual(children, root) -> float:
    B = matrix_B(children, root)
    cov_r, D, R = covariance_blocks(children, root)
    Dinv = np.diag(1.0 / D) if D.size else np.zeros((0, 0))
    rhs = cov_r @ Dinv @ R @ Dinv
    return float(np.max(np.abs(B - rhs))) if B.size else 0.0


def trace_vectors(children, root) -> tuple[Step, np.ndarray, np.ndarray]:
    """Per-coloring vectors α_π and β_π of the trace identity, as rows."""
    st = _step_of(children, root)
    centered = st.ind - st.pr[None, :]
    alpha = np.zeros_like(centered)
    for i in range(st.d):
        blk = st.blocks[i]
        alpha[:, blk] = centered[:, blk] @ st.ratio(i)
    return st, alpha, centered


@dataclass
class ReductionReport:
    trace_lhs: list[float]
    trace_rhs: list[float]
    max_trace_rel_err: float
    lambda_max_A: float
    eig_min_A: float
    norm_B: float
    radius_B: float
    spectrum_A: list[float]
    spectrum_B: list[complex]
    passed: bool
    checks: dict = field(default_factory=dict)


def dimension_reduction_audit(children, root, k_max: int = 4, cap: int = MATRIX_CAP) -> ReductionReport:
    st0 = _step_of(children, root)
    if len(st0.Cr) > cap:
        raise MatrixCapError(f"{len(st0.Cr)} root colorings exceed the cap {cap}")
    bundle = jacobian(children, root, cap)
    A = bundle.A
    B = matrix_B(children, root)
    st, alpha, beta = trace_vectors(children, root)
    lhs, rhs = [], []
    Ak = np.eye(A.shape[0])
    Bk = np.eye(B.shape[0])
    worst = 0.0
    for k in range(1, k_max + 1):
        Ak = Ak @ A
        left = float(np.trace(Ak))
        right = float(np.sum(st.f * np.einsum("px,px->p", alpha @ Bk, beta)))
        Bk = Bk @ B
        lhs.append(left)
        rhs.append(right)
        worst = max(worst, abs(left - right) / max(abs(left), abs(right), 1e-300) if max(abs(left), abs(right)) > 1e-14 else 0.0)
    eigA = np.linalg.eigvalsh((A + A.T) / 2) if A.size else np.zeros(1)
    lam = float(eigA[-1])
    normB = spectral_norm(B)
    rad = spectral_radius(B)
    checks = {
        "trace_identity": worst <= 1e-9,
        "A_psd": float(eigA[0]) >= -psd_tolerance(lam),
        "lambda_A_le_norm_B": lam <= normB + 1e-9,
        "lambda_A_le_radius_B": lam <= rad + 1e-9,
    }
    return ReductionReport(lhs, rhs, worst, lam, float(eigA[0]), normB, rad,
                           [float(x) for x in eigA], list(np.linalg.eigvals(B)) if B.size else [],
                           all(checks.values()), checks)


# ---------------------------------------------------------------------------
# covariance and spectral independence

@dataclass
class SpectralReport:
    X: list[tuple[int, int]]
    cov: np.ndarray
    pi: np.ndarray
    measured_si_constant: float
    eta_formula: float | None = None

    @property
    def measured_eta(self) -> float:
        return self.measured_si_constant - 1.0


def covariance(p: BroomVector, delta: int | None = None) -> SpectralReport:
    """Edge-color covariance, mean diagonal, and the smallest C with Cov ⪯ C·Π."""
    X = [(i, c) for i, l in enumerate(p.lists) for c in l]
    pos = {x: k for k, x in enumerate(X)}
    configs = list(p.values)
    w = np.array([float(p.values[t]) for t in configs])
    w = w / w.sum() if w.size else w
    ind = np.zeros((len(configs), len(X)))
    for r, t in enumerate(configs):
        for i, c in enumerate(t):
            ind[r, pos[i, c]] = 1.0
    mean = ind.T @ w
    cov = ind.T @ (w[:, None] * ind) - np.outer(mean, mean)
    support = mean > 0
    if support.any():
        s = np.sqrt(mean[support])
        W = cov[np.ix_(support, support)] / np.outer(s, s)
        si = float(np.linalg.eigvalsh((W + W.T) / 2)[-1])
    else:
        si = 0.0
    return SpectralReport(X, cov, np.diag(mean), si, eta_formula(delta) if delta and delta >= 2 else None)


def rank_one_plus_identity(k1: float, k2: float, n: int) -> dict:
    """Predicted versus computed spectrum of k1·11ᵀ + k2·I."""
    M = k1 * np.ones((n, n)) + k2 * np.eye(n)
    computed = np.sort(np.linalg.eigvalsh(M))
    predicted = np.sort(np.array([k2] * (n - 1) + [n * k1 + k2]))
    return {"computed": computed, "predicted": predicted,
            "max_error": float(np.max(np.abs(computed - predicted)))}


# ---------------------------------------------------------------------------
# the worst pinning

class RegimeError(ValueError):
    pass


@dataclass
class WorstPinning:
    delta: int
    q: int
    instance: Instance
    pinning: Pinning
    children: list[BroomVector]
    root: BroomVector
    closed_form: Fraction
    max_entry_expression: Fraction


def worst_pinning_instance(delta: int, q: int) -> WorstPinning:
    """The pinned tree whose single root-edge step attains the closed-form norm.

    The root r has one free edge to v1; its other Δ−1 edges are pinned to 1..Δ−1. Each of
    v1's Δ−1 children carries Δ−1 pinned leaf edges colored 1..Δ−1, so after absorbing
    the pinning every list below the root is {Δ..q}.
    """
    if q < 2 * delta:
        raise RegimeError(f"need q >= 2*delta, got q={q}, delta={delta}")
    full = tuple(range(1, q + 1))
    vertices = ["r", "v1"]
    edges = [("e1", ("r", "v1"))]
    pins = {}
    for k in range(1, delta):
        vertices.append(f"r{k}")
        edges.append((f"s{k}", ("r", f"r{k}")))
        pins[f"s{k}"] = k
    for k in range(1, delta):
        u = f"u{k}"
        vertices.append(u)
        edges.append((f"g{k}", ("v1", u)))
        for l in range(1, delta):
            w = f"w{k}_{l}"
            vertices.append(w)
            edges.append((f"h{k}_{l}", (u, w)))
            pins[f"h{k}_{l}"] = l
    inst = Instance(q, tuple(vertices), tuple(edges), {e: full for e, _ in edges}, "r")
    pinning = Pinning.on(inst, pins)
    reduced = apply_pinning(inst, pinning).component("r")
    tables = subtree_tables(reduced)
    kids = reduced.children["v1"]
    child_lists = tuple(reduced.lists[e] for e, _ in kids)
    child = BroomVector(tuple(e for e, _ in kids), child_lists, {k: Fraction(v) for k, v in tables["v1"].items()}).normalize()
    root = recurse([child], [reduced.lists["e1"]], ["e1"])
    closed = Fraction(delta - 1, (q - delta) * (q - 2 * delta + 2))
    max_entry = Fraction(delta - 1, (q - 2 * delta + 2) ** 2)
    return WorstPinning(delta, q, inst, pinning, [child], root, closed, max_entry)


def threshold_scan(delta: int, q_max: int | None = None) -> dict:
    """Smallest q ≥ 2Δ with (Δ−1)/((q−Δ)(q−2Δ+2)) < 1/Δ, next to (3+√5)/2·Δ."""
    q_max = q_max or 10 * delta
    first = None
    for q in range(2 * delta, q_max + 1):
        val = Fraction(delta - 1, (q - delta) * (q - 2 * delta + 2))
        if val < Fraction(1, delta):
            first = q
            break
    return {"delta": delta, "smallest_q": first, "golden_ratio_threshold": (3 + math.sqrt(5)) / 2 * delta}


# ---------------------------------------------------------------------------
# contraction audit

def contraction_audit(children, root, beta: int, measured_eta: float | None = None,
                      delta_deg: int | None = None, decay: float = 0.1) -> dict:
    """Replay the chain λmax(A) ≤ ρ(B) ≤ (1+η)²·max p_r(i,c)p_i(c)/p_i(c̄)² and the theorem's conclusion."""
    st = _step_of(children, root)
    st.require_regular()
    B = matrix_B(children, root)
    normB = spectral_norm(B)
    rad = spectral_radius(B)
    bundle = jacobian(children, root)
    J = bundle.J_phi_full
    normJ = spectral_norm(J)
    if measured_eta is None:
        consts = [covariance(root.normalize() if isinstance(root, BroomVector) else root).measured_si_constant]
        for i, ch in enumerate(children):
            if ch.size:
                consts.append(covariance(ch.normalize()).measured_si_constant)
        measured_eta = max(0.0, max(consts) - 1.0)
    entries = [st.pr[st.blocks[i]][k] * st.present[i][k] / st.absent[i][k] ** 2
               for i in range(st.d) for k in range(len(st.root_lists[i]))]
    max_entry = max(entries) if entries else 0.0
    chain_rhs = (1 + measured_eta) ** 2 * max_entry
    tol = 1e-9 * (1 + chain_rhs)
    if delta_deg is None:
        delta_deg = st.d + max((ch.size for ch in children), default=0)
    hyp_rhs = 1 + (1 + measured_eta) * delta_deg / math.sqrt(1 - 2 * decay)
    hypothesis = beta >= hyp_rhs
    conclusion = normJ <= (1 - decay) / math.sqrt(delta_deg) + 1e-12
    norm1 = float(np.max(np.sum(np.abs(B), axis=0))) if B.size else 0.0
    checks = {
        "radius_B_le_chain": rad <= chain_rhs + tol,
        "J_sq_le_radius_B": normJ**2 <= rad + 1e-9,
        "J_sq_le_norm_B": normJ**2 <= normB + 1e-9,
        "J_sq_le_norm1_B": normJ**2 <= norm1 + 1e-9,
        "conclusion_given_hypothesis": (not hypothesis) or conclusion,
    }
    return {
        "norm_B": normB,
        "radius_B": rad,
        "norm1_B": norm1,
        "norm_J_phi": normJ,
        "max_entry_expression": max_entry,
        "measured_eta": measured_eta,
        "chain_rhs": chain_rhs,
        "norm_B_le_chain": normB <= chain_rhs + tol,
        "hypothesis_holds": hypothesis,
        "hypothesis_rhs": hyp_rhs,
        "conclusion_holds": conclusion,
        "checks": checks,
        "passed": all(checks.values()),
    }
