"""The broom recursion on rooted trees, its square-root potential, and marginal statistics."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .exact import DistributionTable, absent_weights, broom_colorings


class DegenerateInput(ValueError):
    """Every root coloring received weight zero."""


@dataclass(frozen=True)
class BroomVector:
    """Non-negative weights on the proper colorings of a broom.

    `lists[i]` is the list of `broom[i]`; keys of `values` are color tuples aligned with `broom`.
    """

    broom: tuple[str, ...]
    lists: tuple[tuple[int, ...], ...]
    values: Mapping[tuple[int, ...], object]
    normalized: bool = False

    def __post_init__(self):
        if any(v < 0 for v in self.values.values()):
            raise ValueError("broom vector has a negative entry")
        if not any(self.values.values()):
            raise ValueError("broom vector is identically zero")

    @classmethod
    def leaf(cls) -> "BroomVector":
        return cls((), (), {(): Fraction(1)}, True)

    @classmethod
    def from_table(cls, table: DistributionTable, lists: Sequence[Sequence[int]]) -> "BroomVector":
        return cls(tuple(table.support_edges), tuple(tuple(l) for l in lists), dict(table.entries), True)

    @property
    def size(self) -> int:
        return len(self.broom)

    def total(self):
        return sum(self.values.values())

    def normalize(self) -> "BroomVector":
        z = self.total()
        return BroomVector(self.broom, self.lists, {k: v / z for k, v in self.values.items()}, True)

    def as_float(self) -> "BroomVector":
        return BroomVector(self.broom, self.lists, {k: float(v) for k, v in self.values.items()}, self.normalized)

    def scaled(self, factor) -> "BroomVector":
        return BroomVector(self.broom, self.lists, {k: v * factor for k, v in self.values.items()}, False)

    def colorings(self) -> list[tuple[int, ...]]:
        """All proper colorings of the broom within its lists, lexicographic."""
        return list(broom_colorings(self.lists))

    def to_table(self) -> DistributionTable:
        return DistributionTable(self.broom, {k: Fraction(v) for k, v in self.values.items()})


def recurse(
    children: Sequence[BroomVector],
    root_lists: Sequence[Sequence[int]],
    root_edges: Sequence[str] | None = None,
) -> BroomVector:
    """Root broom law from the children's broom vectors.

    p_r(π) is proportional to the product over i of p_i(π(e_i)-bar), the mass child i puts
    on colorings avoiding π(e_i). Works in whatever arithmetic the children carry.
    """
    if len(children) != len(root_lists):
        raise ValueError("one list per child edge is required")
    summaries = [absent_weights(ch.values) for ch in children]
    raw = {}
    for pi in broom_colorings(root_lists):
        val = 1
        for (total, present), c in zip(summaries, pi):
            val = val * (total - present.get(c, 0))
            if not val:
                break
        if val:
            raw[pi] = val
    z = sum(raw.values())
    if not raw or z == 0:
        raise DegenerateInput("all root colorings have zero weight")
    edges = tuple(root_edges) if root_edges is not None else tuple(f"r{i}" for i in range(len(children)))
    return BroomVector(edges, tuple(tuple(l) for l in root_lists), {k: v / z for k, v in raw.items()}, True)


def compose_tree(instance, lists: Mapping[str, Sequence[int]] | None = None, exact: bool = True) -> dict[str, BroomVector]:
    """Apply the recursion bottom-up over a rooted tree; returns every vertex's broom law on its subtree."""
    lists = lists if lists is not None else instance.lists
    one = Fraction(1) if exact else 1.0
    out: dict[str, BroomVector] = {}
    for v in instance.postorder():
        kids = instance.children[v]
        if not kids:
            out[v] = BroomVector((), (), {(): one}, True)
            continue
        out[v] = recurse([out[w] for _, w in kids], [lists[e] for e, _ in kids], [e for e, _ in kids])
    return out


# ---- potential -------------------------------------------------------------

def potential_forward(x):
    if x < 0:
        raise ValueError("potential is defined on non-negative reals")
    return 2 * math.sqrt(x)


def potential_back(y):
    if y < 0:
        raise ValueError("inverse potential is defined on non-negative reals")
    return (y / 2) ** 2


@dataclass(frozen=True)
class PotentialVector:
    broom: tuple[str, ...]
    lists: tuple[tuple[int, ...], ...]
    values: Mapping[tuple[int, ...], float]


def to_potential(p: BroomVector) -> PotentialVector:
    return PotentialVector(p.broom, p.lists, {k: potential_forward(float(v)) for k, v in p.values.items()})


def from_potential(m: PotentialVector) -> BroomVector:
    return BroomVector(m.broom, m.lists, {k: potential_back(v) for k, v in m.values.items()})


# ---- statistics --------------------------------------------------------------

class BroomStats:
    """p(c), p(c-bar), p(c1-bar, c2-bar), p(i,c) and p(i,c1,j,c2) for one broom vector (unnormalized masses)."""

    def __init__(self, p: BroomVector):
        self.p = p
        self.total, present = absent_weights(p.values)
        self._present = dict(present)
        both: dict[tuple[int, int], object] = defaultdict(int)
        at: dict[tuple[int, int], object] = defaultdict(int)
        at2: dict[tuple[int, int, int, int], object] = defaultdict(int)
        for tau, w in p.values.items():
            for i, c in enumerate(tau):
                at[i, c] += w
                for j, c2 in enumerate(tau):
                    at2[i, c, j, c2] += w
                    if c != c2:
                        both[c, c2] += w
        self._both = dict(both)
        self._at = dict(at)
        self._at2 = dict(at2)

    def present(self, c):
        return self._present.get(c, 0)

    def absent(self, c):
        return self.total - self.present(c)

    def absent_pair(self, c1, c2):
        if c1 == c2:
            return self.absent(c1)
        return self.total - self.present(c1) - self.present(c2) + self._both.get((c1, c2), 0)

    def at(self, i, c):
        return self._at.get((i, c), 0)

    def at_pair(self, i, c1, j, c2):
        return self._at2.get((i, c1, j, c2), 0)


def stats(p: BroomVector) -> BroomStats:
    return BroomStats(p)


def broom_beta(children: Sequence[BroomVector], root_lists: Sequence[Sequence[int]]) -> int:
    """Smallest slack |L(e_i)| − deg(e_i) over the root edges of a depth-one recursion step."""
    d = len(children)
    return min(len(l) - (d - 1) - ch.size for ch, l in zip(children, root_lists))


def check_condition_marginal(
    children: Sequence[BroomVector],
    root: BroomVector,
    beta: int,
    children_are_marginals: bool = True,
) -> dict:
    """Check the marginal upper bounds feeding the contraction analysis.

    The child-level bound p_i(a) ≤ m/(β−1+m) needs true subtree marginals and is skipped
    when `children_are_marginals` is false; the root-level bounds hold for arbitrary
    positive child vectors.
    """
    d = len(children)
    rs = BroomStats(root)
    witnesses = []
    worst: dict[str, object] = {}

    def check(name, lhs, rhs, **where):
        slack = rhs - lhs
        if name not in worst or slack < worst[name]:
            worst[name] = slack
        if slack < 0:
            witnesses.append({"bound": name, "lhs": lhs, "rhs": rhs, **where})

    colors = sorted({c for l in root.lists for c in l} | {c for ch in children for l in ch.lists for c in l})
    one = Fraction(1) if isinstance(rs.total, Fraction) else 1.0
    for i, ch in enumerate(children):
        cs = BroomStats(ch)
        m = ch.size
        for a in colors:
            if children_are_marginals and m:
                check("child_marginal", cs.present(a) / cs.total, one * m / (beta - 1 + m), child=i, color=a)
            if a in root.lists[i] and cs.absent(a) > 0:
                check("edge_ratio", (rs.at(i, a) / rs.total) / (cs.absent(a) / cs.total), one / (beta - 1), child=i, color=a)
    for a in colors:
        pa = rs.present(a) / rs.total
        check("root_marginal", pa, one * d / (beta - 1 + d), color=a)
        if pa < 1:
            check("root_ratio", pa / (1 - pa), one * d / (beta - 1), color=a)
    return {"passed": not witnesses, "witnesses": witnesses, "worst_slack": worst}
