"""Model-free radiality checks and an exhaustive spanning-tree enumerator."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

MAX_ENUM_BUSES = 10


class UnionFind:
    """Disjoint sets with path compression and union by rank."""

    def __init__(self, items: Iterable):
        self.parent = {i: i for i in items}
        self.rank = {i: 0 for i in self.parent}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        """Merge the sets of a and b; False if they were already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def components(self) -> list[list]:
        groups: dict = {}
        for item in self.parent:
            groups.setdefault(self.find(item), []).append(item)
        return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


@dataclass(frozen=True)
class Topology:
    buses: tuple[int, ...]
    closed: tuple[tuple[int, int], ...]  # unordered pairs, normalized (low, high)

    @classmethod
    def from_lines(cls, buses: Iterable[int], pairs: Iterable[tuple[int, int]]) -> "Topology":
        buses = tuple(sorted(buses))
        known = set(buses)
        norm = []
        for a, b in pairs:
            if a not in known or b not in known:
                raise ValueError(f"line ({a}, {b}) references an unknown bus")
            norm.append((min(a, b), max(a, b)))
        return cls(buses, tuple(sorted(norm)))

    @property
    def n_bus(self) -> int:
        return len(self.buses)


@dataclass(frozen=True)
class RadialVerdict:
    verdict: str  # "radial" | "has_cycle" | "disconnected"
    witness: tuple = ()

    @property
    def radial(self) -> bool:
        return self.verdict == "radial"


def check_radial(topo: Topology) -> RadialVerdict:
    """Union-find verdict; the witness is the smallest cycle-closing edge or the unreached buses."""
    uf = UnionFind(topo.buses)
    cycle_edges = [e for e in topo.closed if not uf.union(*e)]
    if cycle_edges:
        return RadialVerdict("has_cycle", min(cycle_edges))
    comps = uf.components()
    if len(comps) > 1:
        main = max(comps, key=lambda g: (len(g), -g[0]))
        unreached = tuple(sorted(b for g in comps if g is not main for b in g))
        return RadialVerdict("disconnected", unreached)
    if len(topo.closed) != topo.n_bus - 1:
        return RadialVerdict("has_cycle", ())
    return RadialVerdict("radial")


def consistent_with_x(topo: Topology, x: Mapping[tuple[int, int], float]) -> tuple[bool, list[str]]:
    """Check a directed switch assignment against a topology.

    ``x`` maps directed pairs (i, j) to 0/1. Returns (ok, violations).
    """
    problems = []
    closed = set()
    seen = set()
    for (i, j), v in sorted(x.items()):
        if (j, i) not in x:
            problems.append(f"X[{i},{j}] has no reverse entry")
            continue
        if round(v) != round(x[(j, i)]):
            if (j, i) not in seen:
                problems.append(f"X[{i},{j}]={v:g} differs from X[{j},{i}]={x[(j, i)]:g}")
        seen.add((i, j))
        if round(v) == 1:
            closed.add((min(i, j), max(i, j)))
    total = sum(round(v) for v in x.values())
    if total != 2 * (topo.n_bus - 1):
        problems.append(f"sum of directed X is {total}, expected {2 * (topo.n_bus - 1)}")
    if closed != set(topo.closed):
        problems.append("closed set of X differs from the topology")
    return not problems, problems


def directed_x(topo: Topology, lines: Sequence[tuple[int, int]]) -> dict[tuple[int, int], int]:
    """Directed X assignment (both orientations) of every line against a topology."""
    closed = set(topo.closed)
    out = {}
    for a, b in lines:
        v = int((min(a, b), max(a, b)) in closed)
        out[(a, b)] = v
        out[(b, a)] = v
    return out


def enumerate_radial_configs(buses: Sequence[int], lines: Sequence[tuple[int, int]],
                             fixed_closed: Iterable[int] = (),
                             fixed_open: Iterable[int] = ()) -> list[tuple[int, ...]]:
    """Every spanning tree as a tuple of line indices, in lexicographic order.

    Lines listed in ``fixed_closed`` must be in every tree; ``fixed_open`` lines never are.
    """
    if len(buses) > MAX_ENUM_BUSES:
        raise ValueError(f"enumeration guarded to at most {MAX_ENUM_BUSES} buses")
    must = set(fixed_closed)
    banned = set(fixed_open)
    candidates = [k for k in range(len(lines)) if k not in banned]
    n = len(buses)
    out = []
    for subset in itertools.combinations(candidates, n - 1):
        if not must.issubset(subset):
            continue
        uf = UnionFind(buses)
        if all(uf.union(*lines[k]) for k in subset):
            out.append(subset)
    return out


def max_weight_tree(buses: Sequence[int], lines: Sequence[tuple[int, int]],
                    weights: Sequence[float], forced: Iterable[int] = (),
                    banned: Iterable[int] = ()) -> list[int] | None:
    """Kruskal on descending weight (ties by index); None if no spanning tree exists."""
    uf = UnionFind(buses)
    chosen = []
    banned = set(banned)
    for k in forced:
        if not uf.union(*lines[k]):
            return None
        chosen.append(k)
    order = sorted((k for k in range(len(lines)) if k not in banned and k not in chosen),
                   key=lambda k: (-weights[k], k))
    for k in order:
        if uf.union(*lines[k]):
            chosen.append(k)
    return sorted(chosen) if len(chosen) == len(buses) - 1 else None


MAX_CYCLE_BASIS = 12


def simple_cycles(buses: Sequence[int], lines: Sequence[tuple[int, int]]) -> list[tuple[int, ...]]:
    """Every simple cycle as a sorted tuple of line indices.

    Cycles are the edge sets in the cycle space (XOR combinations of the
    fundamental cycles of a spanning forest) where every touched bus has
    degree two and the edges form one connected piece. Parallel lines give
    two-line cycles. The basis is capped at ``MAX_CYCLE_BASIS`` loops, beyond
    which only the fundamental cycles are returned.
    """
    uf = UnionFind(buses)
    tree, chords = [], []
    for k, (a, b) in enumerate(lines):
        (tree if uf.union(a, b) else chords).append(k)
    adj: dict[int, list[tuple[int, int]]] = {b: [] for b in buses}
    for k in tree:
        a, b = lines[k]
        adj[a].append((b, k))
        adj[b].append((a, k))

    def tree_path(src, dst) -> set[int]:
        prev = {src: None}
        stack = [src]
        while stack:
            u = stack.pop()
            for w, k in adj[u]:
                if w not in prev:
                    prev[w] = (u, k)
                    stack.append(w)
        path = set()
        u = dst
        while prev[u] is not None:
            u, k = prev[u]
            path.add(k)
        return path

    basis = [frozenset(tree_path(*lines[c]) | {c}) for c in chords]
    if len(basis) > MAX_CYCLE_BASIS:
        return sorted(tuple(sorted(c)) for c in basis)
    found = set()
    for mask in range(1, 1 << len(basis)):
        edges: set[int] = set()
        for i, cyc in enumerate(basis):
            if mask >> i & 1:
                edges ^= cyc
        if edges and _is_simple_cycle(edges, lines):
            found.add(tuple(sorted(edges)))
    return sorted(found)


def _is_simple_cycle(edges: set[int], lines: Sequence[tuple[int, int]]) -> bool:
    degree: dict[int, int] = {}
    for k in edges:
        for b in lines[k]:
            degree[b] = degree.get(b, 0) + 1
    if any(d != 2 for d in degree.values()):
        return False
    uf = UnionFind(degree)
    for k in edges:
        uf.union(*lines[k])
    return len({uf.find(b) for b in degree}) == 1


def bridges(buses: Sequence[int], lines: Sequence[tuple[int, int]]) -> list[int]:
    """Indices of lines whose removal disconnects the graph; every spanning tree contains them."""
    out = []
    for k in range(len(lines)):
        uf = UnionFind(buses)
        for j, (a, b) in enumerate(lines):
            if j != k:
                uf.union(a, b)
        if len({uf.find(b) for b in buses}) > 1:
            out.append(k)
    return out
