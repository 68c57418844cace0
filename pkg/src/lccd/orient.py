"""Orientation: immoralities from separating sets, then Meek's rules."""

from __future__ import annotations

import itertools
import logging
from typing import Optional

from lccd.graphs import CycleError, Cpdag, Dag, GraphError, UndirectedGraph, find_separating_set
from lccd.phase1 import SkeletonState, pair_key

log = logging.getLogger(__name__)


class MissingSepsetError(KeyError):
    pass


class InconsistentOrientation(GraphError):
    pass


def _break_cycles(n: int, directed: set) -> set:
    """Drop orientations on directed cycles until the directed part is acyclic."""
    dropped = set()
    while True:
        try:
            Dag(n, directed)
            return dropped
        except CycleError:
            pass
        # find one cycle by DFS and unorient it
        out = {v: [b for a, b in directed if a == v] for v in range(n)}
        colour, parent, cycle = {}, {}, None

        def visit(v):
            nonlocal cycle
            colour[v] = 1
            for w in sorted(out[v]):
                if cycle:
                    return
                if colour.get(w) == 1:
                    cycle, x = [(v, w)], v
                    while x != w:
                        cycle.append((parent[x], x))
                        x = parent[x]
                    return
                if w not in colour:
                    parent[w] = v
                    visit(w)
            colour[v] = 2

        for v in range(n):
            if v not in colour and not cycle:
                visit(v)
        for e in cycle:
            directed.discard(e)
            dropped.add(e)


def orient_immoralities(skeleton: SkeletonState, report: Optional[dict] = None) -> Cpdag:
    """Orient i -> m <- j for every unshielded i - m - j with m outside C_ij.

    An edge proposed in both directions is left undirected; the conflicts
    are logged and listed in ``report["conflicts"]`` when a dict is given.
    """
    g = skeleton.g1
    proposals = set()
    for m in range(g.n):
        for i, j in itertools.combinations(sorted(g.neighbors(m)), 2):
            if g.adjacent(i, j):
                continue
            sep = skeleton.sepset(i, j)
            if sep is None:
                raise MissingSepsetError(f"no separating set recorded for {pair_key(i, j)}")
            if m not in sep:
                proposals.add((i, m))
                proposals.add((j, m))
    conflicts = sorted({tuple(sorted(e)) for e in proposals if (e[1], e[0]) in proposals})
    directed = {e for e in proposals if tuple(sorted(e)) not in conflicts}
    dropped = _break_cycles(g.n, directed)
    for c in conflicts:
        log.info("conflicting immorality orientations on %s; left undirected", pair_key(*c))
    if report is not None:
        report["conflicts"] = [list(c) for c in conflicts]
        report["cycle_breaks"] = [list(e) for e in sorted(dropped)]
    undirected = {e for e in g.edges if e[::-1] not in directed and e not in directed}
    return Cpdag(g.n, directed, undirected)


def _meek_step(n, directed: set, undirected: set, blocked=frozenset()):
    """Return one orientation (a, b) implied by rules R1-R4, or None."""

    def adj(a, b):
        return (a, b) in directed or (b, a) in directed or (min(a, b), max(a, b)) in undirected

    def und(a, b):
        return (min(a, b), max(a, b)) in undirected

    parents = {v: {a for a, b in directed if b == v} for v in range(n)}
    for a, b in sorted(undirected):
        if (a, b) in blocked:
            continue
        for x, y in ((a, b), (b, a)):
            # R1: w -> x - y, w and y nonadjacent
            if any(not adj(w, y) for w in parents[x] if w != y):
                return x, y
            # R2: x -> w -> y with x - y
            if any((x, w) in directed for w in parents[y]):
                return x, y
            # R3: x - c -> y, x - d -> y, c and d nonadjacent
            cand = [c for c in parents[y] if und(x, c)]
            if any(not adj(c, d) for c, d in itertools.combinations(cand, 2)):
                return x, y
            # R4: x - d -> c -> y, x adjacent to c, d and y nonadjacent
            for c in parents[y]:
                if not adj(x, c):
                    continue
                if any(und(x, d) and not adj(d, y) for d in parents[c] if d != x):
                    return x, y
    return None


def meek_close(pdag: Cpdag, strict: bool = True, report: Optional[dict] = None) -> Cpdag:
    """Apply Meek's four rules until nothing changes.

    An orientation that would close a directed cycle means the input is
    inconsistent. With ``strict`` this raises; otherwise the edge stays
    undirected and is listed in ``report["meek_conflicts"]``.
    """
    directed = set(pdag.directed)
    undirected = set(pdag.undirected)
    blocked = set()
    while True:
        step = _meek_step(pdag.n, directed, undirected, blocked)
        if step is None:
            break
        a, b = step
        pair = (min(a, b), max(a, b))
        directed.add((a, b))
        try:
            Dag(pdag.n, directed)
        except CycleError:
            directed.discard((a, b))
            if strict:
                raise InconsistentOrientation(f"orienting {a}->{b} closes a directed cycle") from None
            log.info("Meek orientation %d->%d would close a cycle; left undirected", a, b)
            blocked.add(pair)
            continue
        undirected.discard(pair)
    if report is not None:
        report["meek_conflicts"] = [list(p) for p in sorted(blocked)]
    return Cpdag(pdag.n, directed, undirected)


def true_skeleton_state(dag: Dag) -> SkeletonState:
    """Skeleton and parent-set separators of a known DAG."""
    seps = {}
    for i, j in itertools.combinations(range(dag.n), 2):
        if not dag.adjacent(i, j):
            seps[frozenset((i, j))] = find_separating_set(dag, i, j)
    return SkeletonState(UndirectedGraph(dag.n, dag.skeleton().edges), seps)


def cpdag_of(dag: Dag) -> Cpdag:
    """CPDAG of a DAG via its own skeleton, separators and Meek closure."""
    return meek_close(orient_immoralities(true_skeleton_state(dag)))


def _v_structures(n, directed) -> frozenset:
    pa = {v: {a for a, b in directed if b == v} for v in range(n)}
    adj = {frozenset(e) for e in directed}
    out = set()
    for m in range(n):
        for i, j in itertools.combinations(sorted(pa[m]), 2):
            if frozenset((i, j)) not in adj:
                out.add((i, m, j))
    return frozenset(out)


def equivalence_class_cpdag(dag: Dag, max_edges: int = 16) -> Cpdag:
    """Brute force: orient every edge that points the same way in all Markov-equivalent DAGs."""
    edges = sorted(dag.skeleton().edges)
    if len(edges) > max_edges:
        raise ValueError(f"{len(edges)} edges is too many for brute force")
    target = _v_structures(dag.n, dag.edges)
    members = []
    for bits in itertools.product((0, 1), repeat=len(edges)):
        directed = [(a, b) if bit == 0 else (b, a) for (a, b), bit in zip(edges, bits)]
        try:
            Dag(dag.n, directed)
        except CycleError:
            continue
        if _v_structures(dag.n, directed) == target:
            members.append(set(directed))
    common = set.intersection(*members)
    undirected = [e for e in edges if e not in common and e[::-1] not in common]
    return Cpdag(dag.n, common, undirected)
