"""Exact counting and conditional marginals in rational arithmetic.

Two independent engines live here:

* a frontier sweep that works on any graph: edges are added one at a time in a
  depth-first order and partial colorings are merged as soon as the colors of
  finished edges can no longer matter;
* a bottom-up tree dynamic program over brooms, used for rooted trees.

They share nothing but the instance model, so each serves as an oracle for the other.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .instance import (
    EMPTY,
    Instance,
    Pinning,
    StructuralError,
    apply_pinning,
    check_pinning,
    validate,
)

DEFAULT_CAP = 10**8


class EnumerationCapError(RuntimeError):
    """The search would visit more states than the configured cap."""


class EmptySupport(ValueError):
    """No proper coloring extends the pinning."""


class DegenerateWeights(ValueError):
    """Every coloring has weight zero."""


def frac_str(x: Fraction | int) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s: str | int) -> Fraction:
    return Fraction(s)


@dataclass(frozen=True)
class DistributionTable:
    support_edges: tuple[str, ...]
    entries: Mapping[tuple[int, ...], Fraction]

    def __post_init__(self):
        object.__setattr__(self, "support_edges", tuple(self.support_edges))
        object.__setattr__(self, "entries", {tuple(k): v for k, v in self.entries.items() if v != 0})

    @property
    def total(self):
        return sum(self.entries.values(), Fraction(0))

    def prob(self, config: Sequence[int]):
        return self.entries.get(tuple(config), Fraction(0))

    def normalized(self) -> "DistributionTable":
        z = self.total
        if z == 0:
            raise EmptySupport("cannot normalize an all-zero table")
        return DistributionTable(self.support_edges, {k: Fraction(v) / z for k, v in self.entries.items()})

    def project(self, edges: Sequence[str]) -> "DistributionTable":
        pos = [self.support_edges.index(e) for e in edges]
        out: dict[tuple[int, ...], Fraction] = defaultdict(Fraction)
        for k, v in self.entries.items():
            out[tuple(k[j] for j in pos)] += v
        return DistributionTable(tuple(edges), out)

    def condition(self, assignments: Mapping[str, int]) -> "DistributionTable":
        pos = {self.support_edges.index(e): c for e, c in assignments.items()}
        keep = [j for j in range(len(self.support_edges)) if j not in pos]
        out = {}
        for k, v in self.entries.items():
            if all(k[j] == c for j, c in pos.items()):
                out[tuple(k[j] for j in keep)] = v
        return DistributionTable(tuple(self.support_edges[j] for j in keep), out).normalized()

    def tv(self, other: "DistributionTable") -> Fraction:
        if self.support_edges != other.support_edges:
            raise ValueError("tables live on different edge sets")
        keys = set(self.entries) | set(other.entries)
        return sum((abs(self.prob(k) - other.prob(k)) for k in keys), Fraction(0)) / 2

    def to_dict(self) -> dict:
        return {
            "edges": list(self.support_edges),
            "entries": [{"colors": list(k), "p": frac_str(v)} for k, v in sorted(self.entries.items())],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DistributionTable":
        return cls(tuple(data["edges"]), {tuple(r["colors"]): parse_frac(r["p"]) for r in data["entries"]})


@dataclass(frozen=True)
class WeightedBoundary:
    """Disjoint connected edge regions, each carrying a weight on its partial colorings.

    A weight may be a mapping (missing colorings weigh 0) or a callable.
    """

    regions: tuple[tuple[tuple[str, ...], object], ...] = ()

    def weight(self, k: int, config: tuple[int, ...]):
        w = self.regions[k][1]
        if callable(w):
            return w(config)
        return w.get(config, 0)

    def check(self, instance: Instance) -> None:
        seen: set[str] = set()
        for edges, _ in self.regions:
            for e in edges:
                if e not in instance.lists:
                    raise StructuralError(f"boundary edge {e!r} not in instance")
                if e in seen:
                    raise StructuralError(f"boundary regions overlap at {e!r}")
                seen.add(e)
            if not _connected(instance, edges):
                raise StructuralError(f"boundary region {edges!r} is not connected")

    @property
    def edges(self) -> set[str]:
        return {e for es, _ in self.regions for e in es}


def _connected(instance: Instance, edges: Sequence[str]) -> bool:
    edges = list(edges)
    if len(edges) <= 1:
        return True
    seen = {edges[0]}
    todo = [edges[0]]
    eset = set(edges)
    while todo:
        e = todo.pop()
        for f in instance.adjacent[e]:
            if f in eset and f not in seen:
                seen.add(f)
                todo.append(f)
    return seen == eset


def pinned_lists(instance: Instance, pinning: Pinning) -> dict[str, tuple[int, ...]]:
    """Lists with each pinned edge restricted to its pinned color (conditioning as restriction)."""
    check_pinning(instance, pinning)
    lists = dict(instance.lists)
    for e, c in pinning.assignments.items():
        lists[e] = (c,)
    return lists


# ---------------------------------------------------------------------------
# frontier sweep (general graphs)

def sweep_order(instance: Instance) -> list[str]:
    """Depth-first edge order; keeps the set of live edges small on trees."""
    order: list[str] = []
    emitted: set[str] = set()
    visited: set[str] = set()
    for start in instance.vertices:
        if start in visited:
            continue
        stack = [(start, iter(instance.incident[start]))]
        visited.add(start)
        while stack:
            u, it = stack[-1]
            for e in it:
                if e in emitted:
                    continue
                emitted.add(e)
                order.append(e)
                a, b = instance.ends[e]
                w = b if a == u else a
                if w not in visited:
                    visited.add(w)
                    stack.append((w, iter(instance.incident[w])))
                break
            else:
                stack.pop()
    return order


def sweep(
    instance: Instance,
    lists: Mapping[str, Sequence[int]],
    keep: Sequence[str] = (),
    boundary: WeightedBoundary | None = None,
    cap: int = DEFAULT_CAP,
) -> dict[tuple[int, ...], object]:
    """Weighted number of proper colorings (within `lists`) grouped by the colors on `keep`."""
    order = sweep_order(instance)
    pos = {e: k for k, e in enumerate(order)}
    last_at = {}
    for k, e in enumerate(order):
        for w in instance.ends[e]:
            last_at[w] = k
    regions = boundary.regions if boundary is not None else ()
    region_of = {}
    region_last = {}
    for r, (edges, _) in enumerate(regions):
        for e in edges:
            region_of[e] = r
        region_last[r] = max(pos[e] for e in edges)
    keep_set = set(keep)
    adj = {e: set(instance.adjacent[e]) for e in order}

    active: list[str] = []
    states: dict[tuple[int, ...], object] = {(): 1}
    work = 0
    for k, e in enumerate(order):
        nb = [j for j, f in enumerate(active) if f in adj[e]]
        colors = lists[e]
        nxt: dict[tuple[int, ...], object] = defaultdict(int)
        for key, w in states.items():
            used = {key[j] for j in nb}
            for c in colors:
                if c not in used:
                    nxt[key + (c,)] += w
        work += len(states) * max(1, len(colors))
        if work > cap:
            raise EnumerationCapError(f"sweep exceeded cap of {cap} search-tree leaves")
        active.append(e)
        r = region_of.get(e)
        if r is not None and region_last[r] == k:
            idx = [active.index(f) for f in regions[r][0]]
            weighted = {}
            for key, w in nxt.items():
                wt = boundary.weight(r, tuple(key[j] for j in idx))
                if wt:
                    weighted[key] = w * wt
            nxt = weighted

        def live(f: str) -> bool:
            if f in keep_set:
                return True
            if any(last_at[w] > k for w in instance.ends[f]):
                return True
            rf = region_of.get(f)
            return rf is not None and region_last[rf] > k

        alive = [j for j, f in enumerate(active) if live(f)]
        if len(alive) < len(active):
            merged: dict[tuple[int, ...], object] = defaultdict(int)
            for key, w in nxt.items():
                merged[tuple(key[j] for j in alive)] += w
            nxt = merged
            active = [active[j] for j in alive]
        states = {key: w for key, w in nxt.items() if w}
    out_pos = [active.index(f) for f in keep]
    result: dict[tuple[int, ...], object] = defaultdict(int)
    for key, w in states.items():
        result[tuple(key[j] for j in out_pos)] += w
    return dict(result)


def enumerate_colorings(instance: Instance, pinning: Pinning = EMPTY, cap: int = DEFAULT_CAP) -> Iterator[dict[str, int]]:
    """Plain backtracking over edges in index order and colors in increasing order."""
    lists = pinned_lists(instance, pinning)
    order = instance.edge_ids
    adj = instance.adjacent
    coloring: dict[str, int] = {}
    visits = 0

    def rec(k):
        nonlocal visits
        if k == len(order):
            yield dict(coloring)
            return
        e = order[k]
        for c in lists[e]:
            visits += 1
            if visits > cap:
                raise EnumerationCapError(f"enumeration exceeded cap of {cap} nodes")
            if any(coloring.get(f) == c for f in adj[e]):
                continue
            coloring[e] = c
            yield from rec(k + 1)
            del coloring[e]

    yield from rec(0)


def brute_count(instance: Instance, pinning: Pinning = EMPTY, cap: int = DEFAULT_CAP) -> int:
    return sum(1 for _ in enumerate_colorings(instance, pinning, cap))


def count(instance: Instance, pinning: Pinning = EMPTY, cap: int = DEFAULT_CAP) -> int:
    lists = pinned_lists(instance, pinning)
    return sweep(instance, lists, (), None, cap).get((), 0)


def marginal(instance: Instance, pinning: Pinning, S: Sequence[str], cap: int = DEFAULT_CAP) -> DistributionTable:
    S = tuple(S)
    clash = [e for e in S if e in pinning]
    if clash:
        raise ValueError(f"marginal edges {clash} are pinned")
    lists = pinned_lists(instance, pinning)
    counts = sweep(instance, lists, S, None, cap)
    table = DistributionTable(S, {k: Fraction(v) for k, v in counts.items()})
    if table.total == 0:
        raise EmptySupport("no proper coloring extends the pinning")
    return table.normalized()


def free_edges(instance: Instance, pinning: Pinning = EMPTY) -> tuple[str, ...]:
    return tuple(e for e in instance.edge_ids if e not in pinning)


def joint(instance: Instance, pinning: Pinning = EMPTY, cap: int = DEFAULT_CAP) -> DistributionTable:
    """Conditional law of all unpinned edges."""
    return marginal(instance, pinning, free_edges(instance, pinning), cap)


def weighted_marginal(
    instance: Instance,
    boundary: WeightedBoundary,
    pinning: Pinning,
    S: Sequence[str],
    cap: int = DEFAULT_CAP,
) -> DistributionTable:
    boundary.check(instance)
    lists = pinned_lists(instance, pinning)
    counts = sweep(instance, lists, tuple(S), boundary, cap)
    table = DistributionTable(tuple(S), {k: Fraction(v) for k, v in counts.items()})
    if table.total == 0:
        raise DegenerateWeights("weighted partition function is zero")
    return table.normalized()


# ---------------------------------------------------------------------------
# tree dynamic programming

def broom_colorings(lists: Sequence[Sequence[int]]) -> Iterator[tuple[int, ...]]:
    """Injective color tuples with entry i drawn from lists[i], in lexicographic order."""
    if not lists:
        yield ()
        return
    chosen: list[int] = []

    def rec(k):
        if k == len(lists):
            yield tuple(chosen)
            return
        for c in lists[k]:
            if c in chosen:
                continue
            chosen.append(c)
            yield from rec(k + 1)
            chosen.pop()

    yield from rec(0)


def absent_weights(table: Mapping[tuple[int, ...], object]) -> tuple[object, dict[int, object]]:
    """(total, {c: mass of colorings using c}) for a broom table."""
    total = 0
    present: dict[int, object] = defaultdict(int)
    for tau, w in table.items():
        total += w
        for c in tau:
            present[c] += w
    return total, present


def subtree_tables(
    instance: Instance,
    lists: Mapping[str, Sequence[int]] | None = None,
    broom_weights: Mapping[str, Mapping[tuple[int, ...], object]] | None = None,
) -> dict[str, dict[tuple[int, ...], int]]:
    """For every vertex v, colorings of T_v grouped by the colors on v's broom.

    `broom_weights[v]`, when given, multiplies in a weight on v's broom colorings (absent keys weigh 0).
    """
    if instance.root is None:
        raise StructuralError("tree DP needs a rooted tree instance")
    lists = lists if lists is not None else instance.lists
    tables: dict[str, dict[tuple[int, ...], int]] = {}
    for v in instance.postorder():
        kids = instance.children[v]
        summaries = []
        for _, w in kids:
            summaries.append(absent_weights(tables[w]))
        table = {}
        for tau in broom_colorings([lists[e] for e, _ in kids]):
            val = 1
            for (total, present), c in zip(summaries, tau):
                val *= total - present.get(c, 0)
                if not val:
                    break
            if val and broom_weights is not None and v in broom_weights:
                val *= broom_weights[v].get(tau, 0)
            if val:
                table[tau] = val
        tables[v] = table
    return tables


def tree_count(instance: Instance, pinning: Pinning = EMPTY) -> int:
    tables = subtree_tables(instance, pinned_lists(instance, pinning))
    return sum(tables[instance.root].values())


def tree_broom_marginal(instance: Instance, pinning: Pinning, v: str) -> DistributionTable:
    """Law of the colors on v's downward broom, conditioned on the pinning, by tree DP."""
    if instance.root is None:
        raise StructuralError("tree_broom_marginal needs a rooted tree instance")
    lists = pinned_lists(instance, pinning)
    tables = subtree_tables(instance, lists)
    broom = instance.broom(v)
    inner = tables[v]
    ep = instance.parent_edge[v]
    if ep is None:
        weights = dict(inner)
    else:
        below = instance.subtree_vertices(v)
        outside = [e for e in instance.edge_ids if not set(instance.ends[e]) <= below]
        rest = instance.restrict_edges(outside, root=v)
        out_tables = subtree_tables(rest, {e: lists[e] for e in rest.edge_ids})
        outer = {tau[0]: w for tau, w in out_tables[v].items()}
        weights = {}
        for tau, w in inner.items():
            s = sum(x for c, x in outer.items() if c not in tau)
            if s:
                weights[tau] = w * s
    table = DistributionTable(broom, {k: Fraction(x) for k, x in weights.items()})
    if table.total == 0:
        raise EmptySupport("no proper coloring extends the pinning")
    return table.normalized()


def tree_edge_marginal(instance: Instance, pinning: Pinning, e: str) -> DistributionTable:
    """Law of a single unpinned edge of a rooted tree via the broom of its upper endpoint."""
    u, w = instance.ends[e]
    top = u if instance.parent_edge.get(w) == e else w
    table = tree_broom_marginal(instance, pinning, top)
    return table.project((e,))


# ---------------------------------------------------------------------------
# marginal bound audit

@dataclass
class BoundAudit:
    beta: int
    checked: int = 0
    violations: list[dict] = field(default_factory=list)
    worst_slack: dict[str, Fraction | float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, name: str, lhs, rhs, where: dict) -> None:
        self.checked += 1
        slack = rhs - lhs
        if name not in self.worst_slack or slack < self.worst_slack[name]:
            self.worst_slack[name] = slack
        if slack < 0:
            self.violations.append({"bound": name, "lhs": lhs, "rhs": rhs, **where})


def marginal_bound_audit(instance: Instance, pinning: Pinning = EMPTY, cap: int = DEFAULT_CAP) -> BoundAudit:
    """Check the vertex-set upper bounds and the single-edge lower bound on every (v, F, a).

    The instance is first reduced by absorbing the pinning; β and Δ refer to the reduced
    instance. The lower bound is checked per edge in its sharp form
    (1 − 1/(ℓ−deg))^deg / ℓ with ℓ the number of feasible colors, and in the uniform form
    with β replaced by that edge's own slack.
    """
    reduced = apply_pinning(instance, pinning)
    beta = validate(reduced).beta
    delta = reduced.max_degree
    audit = BoundAudit(beta)
    if beta < 2:
        raise ValueError("marginal bounds need beta >= 2")
    palette = range(1, instance.q + 1)
    is_tree = reduced._is_tree()

    def star_law(v, star):
        if is_tree:
            return tree_broom_marginal(reduced.with_root(v), EMPTY, v).project(star)
        return marginal(reduced, EMPTY, star, cap)

    for v in reduced.vertices:
        star = reduced.incident[v]
        if not star:
            continue
        table = star_law(v, star)
        # star colorings are injective, so {edge j has color a} are disjoint events
        at = defaultdict(Fraction)
        for k, p in table.entries.items():
            for j, c in enumerate(k):
                at[j, c] += p
        for size in range(1, len(star) + 1):
            for F in itertools.combinations(range(len(star)), size):
                for a in palette:
                    p_in = sum((at[j, a] for j in F), Fraction(0))
                    p_out = 1 - sum((at[j, a] for j in range(len(star))), Fraction(0))
                    where = {"vertex": v, "F": [star[j] for j in F], "color": a}
                    audit.record("vertex_set_upper", p_in, Fraction(size, beta - 1 + size), where)
                    if p_out > 0:
                        audit.record("ratio_upper", p_in / p_out, Fraction(size, beta - 1), where)
    for e in reduced.edge_ids:
        table = star_law(reduced.ends[e][0], reduced.incident[reduced.ends[e][0]]).project((e,))
        ell = len(table.entries)
        deg = reduced.edge_degree(e)
        slack_e = ell - deg
        sharp = Fraction(0) if slack_e <= 0 else (1 - Fraction(1, slack_e)) ** deg / ell
        uniform = Fraction(0) if slack_e <= 0 else (1 - Fraction(1, slack_e)) ** (2 * delta - 2) / (slack_e + 2 * delta - 2)
        low = min(table.entries.values())
        audit.record("edge_lower_sharp", sharp, low, {"edge": e})
        audit.record("edge_lower_uniform", uniform, low, {"edge": e})
    return audit
