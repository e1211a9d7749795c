"""List edge coloring instances, pinnings and the structural surgeries used by the audits."""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class StructuralError(ValueError):
    """The instance is not a well-formed graph with lists."""


class InfeasiblePinning(ValueError):
    """A pinning uses a color outside a list or clashes at a shared vertex."""


@dataclass(frozen=True, eq=False)
class Instance:
    q: int
    vertices: tuple[str, ...]
    edges: tuple[tuple[str, tuple[str, str]], ...]
    lists: Mapping[str, tuple[int, ...]]
    root: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(str(v) for v in self.vertices))
        object.__setattr__(
            self, "edges", tuple((str(e), (str(u), str(v))) for e, (u, v) in self.edges)
        )
        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise StructuralError("duplicate vertex id")
        seen = set()
        for e, (u, v) in self.edges:
            if e in seen:
                raise StructuralError(f"duplicate edge id {e!r}")
            seen.add(e)
            for w in (u, v):
                if w not in vset:
                    raise StructuralError(f"edge {e!r} has dangling endpoint {w!r}")
            if u == v:
                raise StructuralError(f"edge {e!r} is a self-loop")
        if set(self.lists) != seen:
            missing = seen.symmetric_difference(self.lists)
            raise StructuralError(f"lists do not match edges: {sorted(missing)}")
        canon = {}
        for e, _ in self.edges:
            colors = tuple(sorted({int(c) for c in self.lists[e]}))
            for c in colors:
                if not 1 <= c <= self.q:
                    raise StructuralError(f"color {c} of edge {e!r} outside 1..{self.q}")
            canon[e] = colors
        object.__setattr__(self, "lists", canon)
        if self.root is not None:
            if self.root not in vset:
                raise StructuralError(f"root {self.root!r} is not a vertex")
            if not self._is_tree():
                raise StructuralError("rooted instance is not a tree")

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (self.q, self.vertices, self.edges, self.lists, self.root) == (
            other.q, other.vertices, other.edges, other.lists, other.root)

    def __hash__(self):
        return hash((self.q, self.vertices, self.edges, self.root))

    # ---- structure -----------------------------------------------------
    @cached_property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e for e, _ in self.edges)

    @cached_property
    def index(self) -> dict[str, int]:
        return {e: k for k, e in enumerate(self.edge_ids)}

    @cached_property
    def ends(self) -> dict[str, tuple[str, str]]:
        return dict(self.edges)

    @cached_property
    def incident(self) -> dict[str, tuple[str, ...]]:
        inc: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e, (u, v) in self.edges:
            inc[u].append(e)
            inc[v].append(e)
        return {v: tuple(es) for v, es in inc.items()}

    @cached_property
    def adjacent(self) -> dict[str, tuple[str, ...]]:
        """Edges sharing at least one endpoint with each edge."""
        out = {}
        for e, (u, v) in self.edges:
            nb = dict.fromkeys(f for f in self.incident[u] + self.incident[v] if f != e)
            out[e] = tuple(nb)
        return out

    def degree(self, v: str) -> int:
        return len(self.incident[v])

    def edge_degree(self, e: str) -> int:
        u, v = self.ends[e]
        return self.degree(u) + self.degree(v) - 2

    @property
    def max_degree(self) -> int:
        return max((self.degree(v) for v in self.vertices), default=0)

    def _is_tree(self) -> bool:
        if len(self.edges) != len(self.vertices) - 1:
            return False
        return len(self.reachable(self.vertices[0])) == len(self.vertices)

    def reachable(self, start: str) -> set[str]:
        seen = {start}
        todo = [start]
        while todo:
            u = todo.pop()
            for e in self.incident[u]:
                a, b = self.ends[e]
                w = b if a == u else a
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return seen

    def distance(self, u: str, v: str) -> int | None:
        dist = {u: 0}
        todo = deque([u])
        while todo:
            x = todo.popleft()
            if x == v:
                return dist[x]
            for e in self.incident[x]:
                a, b = self.ends[e]
                w = b if a == x else a
                if w not in dist:
                    dist[w] = dist[x] + 1
                    todo.append(w)
        return None

    # ---- rooted trees --------------------------------------------------
    def _require_root(self) -> str:
        if self.root is None:
            raise StructuralError("operation needs a rooted tree instance")
        return self.root

    @cached_property
    def parent_edge(self) -> dict[str, str | None]:
        root = self._require_root()
        par: dict[str, str | None] = {root: None}
        todo = deque([root])
        while todo:
            u = todo.popleft()
            for e in self.incident[u]:
                a, b = self.ends[e]
                w = b if a == u else a
                if w not in par:
                    par[w] = e
                    todo.append(w)
        return par

    @cached_property
    def children(self) -> dict[str, tuple[tuple[str, str], ...]]:
        """vertex -> ((edge, child), ...) in edge-index order."""
        par = self.parent_edge
        out: dict[str, list[tuple[str, str]]] = {v: [] for v in self.vertices}
        for e, (u, v) in self.edges:
            if par[v] == e:
                out[u].append((e, v))
            else:
                out[v].append((e, u))
        return {v: tuple(cs) for v, cs in out.items()}

    def broom(self, v: str) -> tuple[str, ...]:
        """Edges from v down to its children."""
        return tuple(e for e, _ in self.children[v])

    @cached_property
    def depth(self) -> dict[str, int]:
        root = self._require_root()
        d = {root: 0}
        todo = deque([root])
        while todo:
            u = todo.popleft()
            for _, w in self.children[u]:
                d[w] = d[u] + 1
                todo.append(w)
        return d

    def postorder(self) -> list[str]:
        order = sorted(self.vertices, key=lambda v: -self.depth[v])
        return order

    def subtree_vertices(self, v: str) -> set[str]:
        out = {v}
        todo = [v]
        while todo:
            u = todo.pop()
            for _, w in self.children[u]:
                out.add(w)
                todo.append(w)
        return out

    # ---- conversions ---------------------------------------------------
    def with_lists(self, lists: Mapping[str, Iterable[int]]) -> "Instance":
        new = dict(self.lists)
        new.update({e: tuple(c) for e, c in lists.items()})
        return Instance(self.q, self.vertices, self.edges, new, self.root)

    def with_root(self, root: str | None) -> "Instance":
        return Instance(self.q, self.vertices, self.edges, self.lists, root)

    def restrict_edges(self, keep: Iterable[str], root: str | None = None) -> "Instance":
        """Sub-instance on the given edges and the vertices they touch."""
        keep = set(keep)
        edges = tuple((e, uv) for e, uv in self.edges if e in keep)
        touched = {w for _, uv in edges for w in uv}
        if root is not None:
            touched.add(root)
        vertices = tuple(v for v in self.vertices if v in touched)
        return Instance(self.q, vertices, edges, {e: self.lists[e] for e, _ in edges}, root)

    def component(self, v: str) -> "Instance":
        """Connected component containing v, rooted at v when the component is a tree."""
        verts = self.reachable(v)
        edges = [e for e, (a, _) in self.edges if a in verts]
        sub = self.restrict_edges(edges)
        if not edges:
            sub = Instance(self.q, (v,), (), {}, None)
        root = v if len(sub.edges) == len(sub.vertices) - 1 else None
        return sub.with_root(root)

    def to_dict(self, pinning: "Pinning | None" = None) -> dict:
        out = {
            "q": self.q,
            "vertices": list(self.vertices),
            "edges": [{"id": e, "ends": list(uv), "list": list(self.lists[e])} for e, uv in self.edges],
        }
        if self.root is not None:
            out["root"] = self.root
        if pinning is not None and pinning.assignments:
            out["pinning"] = [{"edge": e, "color": c} for e, c in sorted(pinning.assignments.items(), key=lambda kv: self.index[kv[0]])]
        return out


@dataclass(frozen=True)
class Pinning:
    assignments: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", {str(e): int(c) for e, c in dict(self.assignments).items()})

    @classmethod
    def on(cls, instance: Instance, assignments: Mapping[str, int]) -> "Pinning":
        p = cls(assignments)
        check_pinning(instance, p)
        return p

    def __len__(self):
        return len(self.assignments)

    def __contains__(self, e):
        return e in self.assignments

    def __getitem__(self, e):
        return self.assignments[e]

    def union(self, other: Mapping[str, int] | "Pinning") -> "Pinning":
        extra = other.assignments if isinstance(other, Pinning) else other
        merged = dict(self.assignments)
        for e, c in extra.items():
            if e in merged and merged[e] != c:
                raise InfeasiblePinning(f"conflicting colors for edge {e!r}")
            merged[e] = c
        return Pinning(merged)


EMPTY = Pinning({})


def check_pinning(instance: Instance, pinning: Pinning) -> None:
    for e, c in pinning.assignments.items():
        if e not in instance.lists:
            raise InfeasiblePinning(f"pinned edge {e!r} is not in the instance")
        if c not in instance.lists[e]:
            raise InfeasiblePinning(f"color {c} not in the list of edge {e!r}")
    for e, c in pinning.assignments.items():
        for f in instance.adjacent[e]:
            if pinning.assignments.get(f) == c:
                raise InfeasiblePinning(f"edges {e!r} and {f!r} share a vertex and color {c}")


@dataclass(frozen=True)
class BetaReport:
    beta: int
    per_edge_slack: Mapping[str, int]


def validate(instance: Instance) -> BetaReport:
    pairs = {}
    for e, (u, v) in instance.edges:
        key = frozenset((u, v))
        if key in pairs:
            raise StructuralError(f"edges {pairs[key]!r} and {e!r} are parallel")
        pairs[key] = e
    slack = {e: len(instance.lists[e]) - instance.edge_degree(e) for e in instance.edge_ids}
    beta = min(slack.values()) if slack else 0
    return BetaReport(beta, slack)


def apply_pinning(instance: Instance, pinning: Pinning) -> Instance:
    """Delete pinned edges and strike each pinned color from the lists of its neighbours."""
    check_pinning(instance, pinning)
    if not pinning.assignments:
        return instance
    lists = {e: set(instance.lists[e]) for e in instance.edge_ids}
    for e, c in pinning.assignments.items():
        for f in instance.adjacent[e]:
            lists[f].discard(c)
    edges = tuple((e, uv) for e, uv in instance.edges if e not in pinning.assignments)
    new_lists = {e: tuple(sorted(lists[e])) for e, _ in edges}
    out = Instance(instance.q, instance.vertices, edges, new_lists, None)
    if instance.root is not None and len(edges) == len(instance.vertices) - 1:
        out = out.with_root(instance.root)
    return out


def split_edge(instance: Instance, e: str) -> tuple[Instance, str, str]:
    """Cut e into two pendant edges, each hanging off one original endpoint at a fresh leaf."""
    if e not in instance.lists:
        raise StructuralError(f"unknown edge {e!r}")
    u, v = instance.ends[e]
    taken_v = set(instance.vertices)
    taken_e = set(instance.edge_ids)

    def fresh(base, taken):
        name, k = base, 0
        while name in taken:
            k += 1
            name = f"{base}{k}"
        taken.add(name)
        return name

    w1, w2 = fresh(f"{e}~u", taken_v), fresh(f"{e}~v", taken_v)
    e1, e2 = fresh(f"{e}.1", taken_e), fresh(f"{e}.2", taken_e)
    edges, lists = [], {}
    for f, uv in instance.edges:
        if f == e:
            edges += [(e1, (u, w1)), (e2, (w2, v))]
            lists[e1] = lists[e2] = instance.lists[e]
        else:
            edges.append((f, uv))
            lists[f] = instance.lists[f]
    return Instance(instance.q, instance.vertices + (w1, w2), tuple(edges), lists, None), e1, e2


# ---- file format -------------------------------------------------------

_TOP_KEYS = {"q", "vertices", "edges", "root", "pinning"}


def instance_from_dict(data: Mapping) -> tuple[Instance, Pinning]:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise StructuralError(f"unknown keys {sorted(unknown)}")
    for key in ("q", "vertices", "edges"):
        if key not in data:
            raise StructuralError(f"missing key {key!r}")
    edges, lists = [], {}
    for rec in data["edges"]:
        extra = set(rec) - {"id", "ends", "list"}
        if extra:
            raise StructuralError(f"unknown edge keys {sorted(extra)}")
        ends = rec["ends"]
        if len(ends) != 2:
            raise StructuralError(f"edge {rec['id']!r} must have two ends")
        eid = str(rec["id"])
        if eid in lists:
            raise StructuralError(f"duplicate edge id {eid!r}")
        edges.append((eid, (ends[0], ends[1])))
        lists[eid] = tuple(rec["list"])
    inst = Instance(int(data["q"]), tuple(data["vertices"]), tuple(edges), lists, data.get("root"))
    pins = {}
    for rec in data.get("pinning", []):
        extra = set(rec) - {"edge", "color"}
        if extra:
            raise StructuralError(f"unknown pinning keys {sorted(extra)}")
        pins[str(rec["edge"])] = int(rec["color"])
    pinning = Pinning(pins)
    check_pinning(inst, pinning)
    return inst, pinning


def load_instance(path: str | Path) -> tuple[Instance, Pinning]:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def dump_instance(instance: Instance, path: str | Path, pinning: Pinning | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance.to_dict(pinning), fh, indent=1)


# ---- generators --------------------------------------------------------

def tree_from_parents(parents: Sequence[int], q: int, lists: Mapping[int, Iterable[int]] | None = None) -> Instance:
    """Rooted tree on vertices v0..vn where vertex k+1 hangs below parents[k]; edge k joins them."""
    n = len(parents) + 1
    vertices = tuple(f"v{k}" for k in range(n))
    edges = tuple((f"e{k}", (f"v{p}", f"v{k + 1}")) for k, p in enumerate(parents))
    full = tuple(range(1, q + 1))
    ls = {f"e{k}": tuple(lists[k]) if lists and k in lists else full for k in range(len(parents))}
    return Instance(q, vertices, edges, ls, "v0")


def complete_tree(branching: int, depth: int, q: int, root_degree: int | None = None,
                  pendant_root: bool = False) -> Instance:
    """Complete tree of the given depth; every internal vertex has `branching` children.

    With pendant_root the root gets a single child, which then branches normally, so
    the root edge is pendant as in the one-step contraction setting.
    """
    parents: list[int] = []
    frontier = [0]
    count = 1
    for level in range(depth):
        nxt = []
        for u in frontier:
            k = branching
            if level == 0:
                k = 1 if pendant_root else (root_degree if root_degree is not None else branching)
            for _ in range(k):
                parents.append(u)
                nxt.append(count)
                count += 1
        frontier = nxt
    return tree_from_parents(parents, q)


def random_tree(rng: random.Random, n_edges: int, max_degree: int, q: int) -> Instance:
    """Random-shape rooted tree with a degree cap; vertices are numbered in BFS order."""
    parents: list[int] = []
    deg = [0]
    for k in range(n_edges):
        open_ = [u for u in range(len(deg)) if deg[u] < max_degree]
        u = rng.choice(open_)
        parents.append(u)
        deg[u] += 1
        deg.append(1)
    # renumber so that edges are listed breadth first
    order = _bfs_order(parents)
    return tree_from_parents(order, q)


def _bfs_order(parents: Sequence[int]) -> list[int]:
    n = len(parents) + 1
    kids: list[list[int]] = [[] for _ in range(n)]
    for k, p in enumerate(parents):
        kids[p].append(k + 1)
    new_id = {0: 0}
    out: list[int] = []
    todo = deque([0])
    while todo:
        u = todo.popleft()
        for w in kids[u]:
            new_id[w] = len(new_id)
            out.append(new_id[u])
            todo.append(w)
    return out


def caterpillar(spine: int, legs: int, q: int) -> Instance:
    """Path of `spine` edges with `legs` pendant edges at every interior spine vertex."""
    parents = []
    for k in range(spine):
        parents.append(k)
    count = spine + 1
    for k in range(1, spine):
        for _ in range(legs):
            parents.append(k)
            count += 1
    return tree_from_parents(_bfs_order(parents), q)


def random_lists(rng: random.Random, instance: Instance, beta: int) -> Instance:
    """Shrink every list to a random subset of size deg(e)+beta (capped at q)."""
    out = {}
    for e in instance.edge_ids:
        size = min(instance.q, instance.edge_degree(e) + beta)
        out[e] = tuple(sorted(rng.sample(range(1, instance.q + 1), size)))
    return instance.with_lists(out)
