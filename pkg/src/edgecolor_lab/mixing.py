"""Weak and strong spatial mixing experiments on trees, one-step contraction, and the threshold witness."""

from __future__ import annotations

import csv
import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .broom import compose_tree
from .exact import DistributionTable, pinned_lists, tree_edge_marginal
from .instance import Instance, Pinning, apply_pinning, complete_tree, validate
from .spectral import RegimeError, eta_formula


class HypothesisError(ValueError):
    pass


@dataclass
class MixingReport:
    family: str
    delta: int
    q: int
    beta: int | None
    distances: list[int] = field(default_factory=list)
    tv: list[Fraction] = field(default_factory=list)
    fitted_rate: float | None = None
    theorem_rate: float | None = None
    theorem_constant: float | None = None
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values() if isinstance(v, bool))

    def rows(self):
        for ell, t in zip(self.distances, self.tv):
            yield {
                "family": self.family, "delta": self.delta, "q": self.q, "beta": self.beta, "ell": ell,
                "tv_num": t.numerator, "tv_den": t.denominator, "tv_float": float(t),
            }


def write_csv(reports: Iterable[MixingReport], path) -> None:
    cols = ["family", "delta", "q", "beta", "ell", "tv_num", "tv_den", "tv_float"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for rep in reports:
            for row in rep.rows():
                row["tv_float"] = "%.17g" % row["tv_float"]
                w.writerow(row)


def fit_rate(distances: Sequence[int], tv: Sequence) -> float | None:
    """exp of the least-squares slope of log tv over the last ⌈n/2⌉ points, zeros skipped."""
    n = len(distances)
    tail = range(n - math.ceil(n / 2), n)
    xs = [distances[k] for k in tail if tv[k] > 0]
    ys = [math.log(float(tv[k])) for k in tail if tv[k] > 0]
    if len(xs) < 2:
        return None
    slope = np.polyfit(np.array(xs, dtype=float), np.array(ys), 1)[0]
    return float(math.exp(slope))


def wsm_theorem_rate(delta: int) -> float:
    eps = max((delta - 1) / delta, (math.e - 1) / math.e)
    return 1 - (1 - eps) / (2 * delta - (1 + eps))


# ---------------------------------------------------------------------------
# trees with a pendant root edge over a (Δ−1)-ary tree

def pendant_tree(delta: int, depth: int, q: int) -> Instance:
    """Root edge over a complete (Δ−1)-ary tree; the deepest edges sit at distance `depth`."""
    return complete_tree(delta - 1, depth + 1, q, pendant_root=True)


def root_edge(instance: Instance) -> str:
    (e, _), = instance.children[instance.root]
    return e


def edges_at(instance: Instance, dist: int) -> list[str]:
    """Edges whose upper endpoint is at depth dist+1 below the root (root edge is distance 0)."""
    out = []
    for e in instance.edge_ids:
        u, v = instance.ends[e]
        top = u if instance.depth[u] < instance.depth[v] else v
        if instance.depth[top] == dist:
            out.append(e)
    return out


def alternating_pinnings(instance: Instance, delta: int, dist: int) -> tuple[Pinning, Pinning]:
    """Sibling edges at distance `dist` get {1..Δ−1} under the first pinning and {Δ..2Δ−2} under the second."""
    first, second = {}, {}
    for v in instance.vertices:
        kids = [e for e, _ in instance.children[v]]
        if kids and kids[0] in set(edges_at(instance, dist)):
            for k, e in enumerate(kids):
                first[e] = 1 + k
                second[e] = delta + k
    return Pinning(first), Pinning(second)


def root_tv(instance: Instance, s1: Pinning, s2: Pinning, e: str | None = None) -> Fraction:
    e = e or root_edge(instance)
    return tree_edge_marginal(instance, s1, e).tv(tree_edge_marginal(instance, s2, e))


def root_law_by_recursion(instance: Instance, pinning: Pinning) -> DistributionTable:
    """Root broom law obtained by composing the broom recursion bottom-up on pinned lists."""
    laws = compose_tree(instance, pinned_lists(instance, pinning))
    return laws[instance.root].to_table()


def wsm_experiment(delta: int, q: int, depths: Sequence[int], identical: bool = False,
                   check_recursion: bool = True) -> MixingReport:
    if delta < 2:
        raise ValueError("Δ must be at least 2")
    rep = MixingReport("pendant-regular", delta, q, None)
    agree = True
    for ell in depths:
        T = pendant_tree(delta, ell, q)
        s1, s2 = alternating_pinnings(T, delta, ell)
        if identical:
            s2 = s1
        t = root_tv(T, s1, s2)
        if check_recursion:
            e = root_edge(T)
            for s in (s1, s2):
                direct = tree_edge_marginal(T, s, e)
                agree &= root_law_by_recursion(T, s).entries == direct.entries
        rep.distances.append(ell)
        rep.tv.append(t)
        rep.beta = validate(apply_pinning(T, s1)).beta if len(T.edge_ids) > len(s1) else None
    rep.fitted_rate = fit_rate(rep.distances, rep.tv)
    rep.checks["tv_in_unit_interval"] = all(0 <= t <= 1 for t in rep.tv)
    rep.checks["recursion_agrees"] = agree
    if q >= 2 * delta - 1:
        rate = wsm_theorem_rate(delta)
        rep.theorem_rate = rate
        nz = [(ell, t) for ell, t in zip(rep.distances, rep.tv) if t > 0]
        rep.theorem_constant = max((float(t) / rate**ell for ell, t in nz), default=0.0)
        rep.checks["fitted_le_theorem_rate"] = rep.fitted_rate is None or rep.fitted_rate <= rate
    return rep


def hardness_witness(delta: int, depth: int, q: int | None = None) -> dict:
    """Alternating leaf pinnings on a (Δ−1)-ary tree; with q = 2Δ−2 they freeze every edge."""
    q = 2 * delta - 2 if q is None else q
    if q < 2 * delta - 2:
        raise RegimeError("need at least 2Δ−2 colors for the pinnings to exist")
    T = pendant_tree(delta, depth, q)
    s1, s2 = alternating_pinnings(T, delta, depth)
    tv = {}
    for e in T.edge_ids:
        if e in s1:
            continue
        tv[e] = root_tv(T, s1, s2, e)
    # parity structure under the first pinning
    parity_ok = True
    if q == 2 * delta - 2:
        low, high = set(range(1, delta)), set(range(delta, 2 * delta - 1))
        for dist in range(depth):
            want = low if (depth - dist) % 2 == 0 else high
            for e in edges_at(T, dist):
                support = {k[0] for k in tree_edge_marginal(T, s1, e).entries}
                parity_ok &= support == want if dist > 0 else support <= want
    return {"instance": T, "pinnings": (s1, s2), "tv": tv, "parity_ok": parity_ok,
            "all_one": all(t == 1 for t in tv.values())}


# ---------------------------------------------------------------------------
# one-step contraction

def root_marginal_from_children(children: Sequence[Mapping[int, Fraction]], q: int) -> dict[int, Fraction]:
    """Law of an edge above a vertex whose d child edges have independent marginals on [q]."""
    d = len(children)
    colors = range(1, q + 1)
    total = Fraction(0)
    avoid = {c: Fraction(0) for c in colors}
    for A in itertools.permutations(colors, d):
        w = Fraction(1)
        for P, a in zip(children, A):
            w *= P.get(a, 0)
        if not w:
            continue
        total += w
        used = set(A)
        for c in colors:
            if c not in used:
                avoid[c] += w
    return {c: avoid[c] / ((q - d) * total) for c in colors}


def contraction_bound(d: int, q: int, dev) -> Fraction:
    dev = Fraction(dev)
    return 2 * d * dev / (q * (1 - dev * abs(q - 2 * d)))


def wsm_contraction_check(children: Sequence[Mapping[int, Fraction]], q: int, dev) -> dict:
    dev = Fraction(dev)
    if dev >= Fraction(1, q):
        raise HypothesisError(f"deviation {dev} is not below 1/q")
    for i, P in enumerate(children):
        if sum(P.values()) != 1:
            raise HypothesisError(f"child {i} is not a distribution")
        for c in range(1, q + 1):
            if abs(P.get(c, 0) - Fraction(1, q)) > dev:
                raise HypothesisError(f"child {i} color {c} deviates by more than {dev}")
    root = root_marginal_from_children(children, q)
    observed = max(abs(v - Fraction(1, q)) for v in root.values())
    bound = contraction_bound(len(children), q, dev)
    return {"observed": observed, "bound": bound, "passed": observed <= bound, "root": root}


def perturbed_children(rng: random.Random, d: int, q: int, dev, grid: int = 1000) -> list[dict[int, Fraction]]:
    """d exact distributions on [q], each within `dev` of uniform."""
    dev = Fraction(dev)
    out = []
    for _ in range(d):
        u = [Fraction(rng.randint(-grid, grid), grid) for _ in range(q)]
        mean = sum(u) / q
        u = [x - mean for x in u]
        scale = max(abs(x) for x in u) or 1
        out.append({c + 1: Fraction(1, q) + dev * u[c] / scale for c in range(q)})
    return out


# ---------------------------------------------------------------------------
# strong spatial mixing

def ssm_surgery(instance: Instance, s1: Pinning, s2: Pinning, boundary: Iterable[str]):
    """Absorb the pinnings' common part, keeping only the discrepancy edges pinned."""
    boundary = set(boundary)
    keys = set(s1.assignments) | set(s2.assignments)
    for e in keys - boundary:
        if s1.assignments.get(e) != s2.assignments.get(e):
            raise ValueError(f"pinnings differ on {e!r}, outside the declared discrepancy set")
    common = Pinning({e: s1[e] for e in keys - boundary})
    reduced = apply_pinning(instance, common)
    comp = reduced.component(instance.root)
    b1 = Pinning({e: c for e, c in s1.assignments.items() if e in boundary and e in comp.lists})
    b2 = Pinning({e: c for e, c in s2.assignments.items() if e in boundary and e in comp.lists})
    return comp, b1, b2


def ssm_theorem_decay(delta: int, beta: int) -> float | None:
    """Decay δ of the SSM statement; None outside β ≥ Δ+50 or when non-positive."""
    if beta < delta + 50:
        return None
    s = (1 + (beta - 1 - delta) / delta) ** 2
    val = (s - (1 + eta_formula(delta)) ** 2) / (2 * s)
    return val if val > 0 else None


def ssm_experiment(delta: int, q: int, depths: Sequence[int], extra_pins: int = 0, seed: int = 0,
                   empty_boundary: bool = False) -> MixingReport:
    """Single-edge discrepancy at distance ℓ below the root edge of a pendant (Δ−1)-ary tree.

    `extra_pins` further edges (chosen by seed, outside the root edge's path) are pinned to the same
    color in both pinnings; the surgery absorbs them and the result is compared with the direct
    conditional computation.
    """
    rng = random.Random(seed)
    rep = MixingReport("pendant-regular-ssm", delta, q, None)
    surgery_ok = True
    for ell in depths:
        T = pendant_tree(delta, ell, q)
        rep.beta = validate(T).beta
        target = edges_at(T, ell)[0]
        c1, c2 = T.lists[target][0], T.lists[target][1]
        common: dict[str, int] = {}
        path, v = set(), max(T.ends[target], key=lambda w: T.depth[w])
        while T.parent_edge[v] is not None:
            path.add(T.parent_edge[v])
            v = next(w for w in T.ends[T.parent_edge[v]] if w != v)
        others = [e for e in T.edge_ids if e not in path]
        rng.shuffle(others)
        for e in others[:extra_pins]:
            if any(f in common or f == target for f in T.adjacent[e]):
                continue
            used = {common[f] for f in T.adjacent[e] if f in common} | {c1, c2}
            free = [c for c in T.lists[e] if c not in used]
            common[e] = free[0]
        if empty_boundary:
            s1 = s2 = Pinning(dict(common))
            boundary = set()
        else:
            s1 = Pinning({**common, target: c1})
            s2 = Pinning({**common, target: c2})
            boundary = {target}
        direct = root_tv(T, s1, s2)
        comp, b1, b2 = ssm_surgery(T, s1, s2, boundary)
        via = root_tv(comp, b1, b2, root_edge(T))
        surgery_ok &= via == direct
        rep.distances.append(ell)
        rep.tv.append(direct)
    rep.fitted_rate = fit_rate(rep.distances, rep.tv)
    rep.checks["surgery_matches_direct"] = surgery_ok
    rep.checks["tv_in_unit_interval"] = all(0 <= t <= 1 for t in rep.tv)
    decay = ssm_theorem_decay(delta, rep.beta)
    if decay is not None:
        rep.theorem_rate = 1 - decay
        rep.theorem_constant = max(float(t) / (1 - decay) ** max(ell - 2, 0) for ell, t in zip(rep.distances, rep.tv))
    return rep
