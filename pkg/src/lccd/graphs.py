"""Graph types and purely graphical queries.

Vertices are integers ``0..n-1``. Every graph value is immutable after
construction, so queries can be shared freely between workers.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from typing import Iterable, Optional

import numpy as np

from lccd.rng import make_rng


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


def _check_vertices(n: int, vertices: Iterable[int]) -> frozenset:
    out = frozenset(int(v) for v in vertices)
    for v in out:
        if not 0 <= v < n:
            raise GraphError(f"vertex {v} out of range for n={n}")
    return out


def _pair(a: int, b: int) -> tuple:
    return (a, b) if a < b else (b, a)


class Dag:
    """Directed acyclic graph over ``n`` integer vertices."""

    def __init__(self, n: int, edges: Iterable = ()):
        self.n = int(n)
        edge_list = [(int(a), int(b)) for a, b in edges]
        for a, b in edge_list:
            if a == b:
                raise GraphError(f"self-loop on {a}")
            _check_vertices(self.n, (a, b))
        self.edges = frozenset(edge_list)
        if len(self.edges) != len(edge_list):
            raise GraphError("duplicate edges")
        if any((b, a) in self.edges for a, b in self.edges):
            raise CycleError("2-cycle in edge set")
        self._parents = [set() for _ in range(self.n)]
        self._children = [set() for _ in range(self.n)]
        for a, b in self.edges:
            self._parents[b].add(a)
            self._children[a].add(b)
        self._order = self._topological_order()

    def _topological_order(self) -> tuple:
        indeg = [len(p) for p in self._parents]
        queue = deque(v for v in range(self.n) if indeg[v] == 0)
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for c in sorted(self._children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != self.n:
            raise CycleError("graph contains a directed cycle")
        return tuple(order)

    def __eq__(self, other):
        return isinstance(other, Dag) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        return f"Dag(n={self.n}, edges={sorted(self.edges)})"

    @property
    def topological_order(self) -> tuple:
        return self._order

    def parents(self, v: int) -> frozenset:
        return frozenset(self._parents[v])

    def children(self, v: int) -> frozenset:
        return frozenset(self._children[v])

    def adjacent(self, a: int, b: int) -> bool:
        return (a, b) in self.edges or (b, a) in self.edges

    def degree(self, v: int) -> int:
        return len(self._parents[v]) + len(self._children[v])

    def max_degree(self) -> int:
        """Max total (in plus out) degree."""
        return max((self.degree(v) for v in range(self.n)), default=0)

    def skeleton(self) -> "UndirectedGraph":
        return UndirectedGraph(self.n, self.edges)

    def _reach(self, start: Iterable[int], step) -> set:
        seen = set()
        stack = list(start)
        while stack:
            v = stack.pop()
            for w in step[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def ancestors_of(self, X: Iterable[int]) -> set:
        """Strict ancestors of any vertex in X (may include members of X)."""
        return self._reach(X, self._parents)

    def descendants_of(self, X: Iterable[int]) -> set:
        return self._reach(X, self._children)

    def induced(self, W: Iterable[int]) -> "Dag":
        W = set(W)
        return Dag(self.n, [(a, b) for a, b in self.edges if a in W and b in W])

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_json(cls, obj: dict) -> "Dag":
        return cls(obj["n"], [tuple(e) for e in obj["edges"]])


class UndirectedGraph:
    def __init__(self, n: int, edges: Iterable = ()):
        self.n = int(n)
        pairs = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise GraphError(f"self-loop on {a}")
            _check_vertices(self.n, (a, b))
            pairs.add(_pair(a, b))
        self.edges = frozenset(pairs)
        self._adj = [set() for _ in range(self.n)]
        for a, b in self.edges:
            self._adj[a].add(b)
            self._adj[b].add(a)

    def __eq__(self, other):
        return isinstance(other, UndirectedGraph) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))

    def __repr__(self):
        return f"UndirectedGraph(n={self.n}, edges={sorted(self.edges)})"

    def neighbors(self, v: int) -> frozenset:
        return frozenset(self._adj[v])

    def adjacent(self, a: int, b: int) -> bool:
        return b in self._adj[a]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def max_degree(self) -> int:
        return max((len(a) for a in self._adj), default=0)

    def neighborhood(self, X: Iterable[int], radius: int = 1) -> frozenset:
        """Vertices at graph distance 1..radius from X, excluding X itself."""
        X = set(X)
        frontier = set(X)
        seen = set(X)
        for _ in range(radius):
            nxt = set()
            for v in frontier:
                nxt |= self._adj[v]
            nxt -= seen
            seen |= nxt
            frontier = nxt
        return frozenset(seen - X)

    def connected(self, S: Iterable[int], S2: Iterable[int], blocked: Iterable[int] = ()) -> bool:
        """True if some path joins S and S2 avoiding the blocked vertices."""
        blocked = set(blocked)
        targets = set(S2) - blocked
        start = set(S) - blocked
        if start & targets:
            return True
        seen = set(start)
        queue = deque(start)
        while queue:
            v = queue.popleft()
            for w in self._adj[v]:
                if w in blocked or w in seen:
                    continue
                if w in targets:
                    return True
                seen.add(w)
                queue.append(w)
        return False

    def without(self, pairs: Iterable) -> "UndirectedGraph":
        drop = {_pair(*p) for p in pairs}
        return UndirectedGraph(self.n, self.edges - drop)

    def to_json(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in sorted(self.edges)]}


class Cpdag:
    """Partially directed graph: directed ``(a, b)`` means a -> b."""

    def __init__(self, n: int, directed: Iterable = (), undirected: Iterable = ()):
        self.n = int(n)
        self.directed = frozenset((int(a), int(b)) for a, b in directed)
        self.undirected = frozenset(_pair(int(a), int(b)) for a, b in undirected)
        for a, b in self.directed | self.undirected:
            if a == b:
                raise GraphError(f"self-loop on {a}")
            _check_vertices(self.n, (a, b))
        if {_pair(a, b) for a, b in self.directed} & self.undirected:
            raise GraphError("pair is both directed and undirected")
        if any((b, a) in self.directed for a, b in self.directed):
            raise GraphError("pair directed both ways")
        Dag(self.n, self.directed)  # acyclicity of the directed part

    def __eq__(self, other):
        return (
            isinstance(other, Cpdag)
            and self.n == other.n
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def __hash__(self):
        return hash((self.n, self.directed, self.undirected))

    def __repr__(self):
        return f"Cpdag(n={self.n}, directed={sorted(self.directed)}, undirected={sorted(self.undirected)})"

    def skeleton(self) -> UndirectedGraph:
        return UndirectedGraph(self.n, set(self.directed) | set(self.undirected))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "directed": [list(e) for e in sorted(self.directed)],
            "undirected": [list(e) for e in sorted(self.undirected)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Cpdag":
        return cls(obj["n"], [tuple(e) for e in obj["directed"]], [tuple(e) for e in obj["undirected"]])


def relatives(g: Dag, kind: str, X: Iterable[int]) -> frozenset:
    """Set-valued PA/CH/AN/DE/MB; unions over X with X itself removed."""
    X = _check_vertices(g.n, X)
    if kind == "parents":
        out = set().union(*(g._parents[v] for v in X)) if X else set()
    elif kind == "children":
        out = set().union(*(g._children[v] for v in X)) if X else set()
    elif kind == "ancestors":
        out = g.ancestors_of(X)
    elif kind == "descendants":
        out = g.descendants_of(X)
    elif kind == "markov_boundary":
        ch = set().union(*(g._children[v] for v in X)) if X else set()
        pa = set().union(*(g._parents[v] for v in X)) if X else set()
        co = set().union(*(g._parents[c] for c in ch)) if ch else set()
        out = pa | ch | co
    else:
        raise ValueError(f"unknown relative kind {kind!r}")
    return frozenset(out - X)


def moralize(g: Dag, W: Optional[Iterable[int]] = None) -> UndirectedGraph:
    """Moral graph of the induced subgraph g[W] (all vertices if W is None)."""
    W = set(range(g.n)) if W is None else set(_check_vertices(g.n, W))
    edges = {(a, b) for a, b in g.edges if a in W and b in W}
    for c in W:
        pa = sorted(p for p in g._parents[c] if p in W)
        edges.update(itertools.combinations(pa, 2))
    return UndirectedGraph(g.n, edges)


def d_separated(g: Dag, S: Iterable[int], S2: Iterable[int], C: Iterable[int] = ()) -> bool:
    """d-separation via connectivity in the moralized ancestral subgraph."""
    S, S2, C = (_check_vertices(g.n, x) for x in (S, S2, C))
    if S & S2 or S & C or S2 & C:
        raise GraphError("S, S2 and C must be pairwise disjoint")
    if not S or not S2:
        return True
    core = S | S2 | C
    anc = core | g.ancestors_of(core)
    return not moralize(g, anc).connected(S, S2, blocked=C)


def find_separating_set(g: Dag, i: int, j: int) -> Optional[frozenset]:
    """PA(i) or PA(j), whichever d-separates; None for adjacent pairs."""
    if i == j:
        raise GraphError("i and j must differ")
    if g.adjacent(i, j):
        return None
    for v, w in ((i, j), (j, i)):
        cand = g.parents(v) - {w}
        if d_separated(g, {i}, {j}, cand):
            return frozenset(cand)
    raise AssertionError("neither parent set separates a nonadjacent pair")


def immoral_descendants(g: Dag, i: int, j: int) -> frozenset:
    """Common children of i and j together with all their descendants."""
    if g.adjacent(i, j):
        raise GraphError(f"{i} and {j} are adjacent")
    common = g.children(i) & g.children(j)
    return frozenset(common | g.descendants_of(common))


def early_threshold(delta: int, k: int) -> int:
    return (2 + delta * delta) * (math.ceil(math.log2(k)) + 1)


def early_vertices(g: Dag, k: int) -> frozenset:
    """Vertices V with |V \\ DE(V)| below the early-vertex threshold."""
    if k < 2:
        raise ValueError("k must be >= 2")
    thr = early_threshold(g.max_degree(), k)
    return frozenset(v for v in range(g.n) if g.n - len(g.descendants_of([v])) < thr)


def random_dag(n: int, p: float, seed) -> Dag:
    """Erdos-Renyi skeleton oriented along a uniformly random permutation."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability {p} outside [0, 1]")
    rng = make_rng(seed, "random_dag")
    rank = np.empty(n, dtype=int)
    rank[rng.permutation(n)] = np.arange(n)
    pairs = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    edges = []
    for (a, b), kept in zip(pairs, keep):
        if kept:
            edges.append((a, b) if rank[a] < rank[b] else (b, a))
    return Dag(n, edges)


def load_graph(path) -> Dag:
    with open(path) as fh:
        return Dag.from_json(json.load(fh))
