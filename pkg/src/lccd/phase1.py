"""Coarsened rank tests: prune a complete graph to a superset of the skeleton.

Supervariables of size ceil(lg k) + 1 are formed around the endpoints of
live edges. Whenever the probability matrix of two disjoint supervariables
has rank <= k in every populated stratum of a conditioning set, every edge
between the two supervariables is deleted.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from lccd.config import RunConfig
from lccd.graphs import UndirectedGraph
from lccd.rank import DegenerateMatrixError, chi2_rank_test

log = logging.getLogger(__name__)

REMOVE, KEEP, SKIPPED = "remove", "keep", "skipped"


def block_size(k: int) -> int:
    return math.ceil(math.log2(k)) + 1


def pair_key(i: int, j: int) -> str:
    a, b = sorted((i, j))
    return f"{a}-{b}"


@dataclass
class SkeletonState:
    g1: UndirectedGraph
    sepsets: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def delta_hat(self) -> int:
        return self.g1.max_degree()

    def sepset(self, i: int, j: int) -> Optional[frozenset]:
        return self.sepsets.get(frozenset((i, j)))

    def to_json(self) -> dict:
        seps = {pair_key(*sorted(p)): sorted(c) for p, c in self.sepsets.items()}
        return {
            "n": self.g1.n,
            "edges": [list(e) for e in sorted(self.g1.edges)],
            "sepsets": dict(sorted(seps.items())),
            "delta": self.delta_hat,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SkeletonState":
        n = obj.get("n")
        edges = [tuple(e) for e in obj["edges"]]
        seps = {}
        for key, c in obj.get("sepsets", {}).items():
            a, b = (int(x) for x in key.split("-"))
            seps[frozenset((a, b))] = frozenset(c)
        if n is None:
            n = 1 + max([v for e in edges for v in e] + [v for p in seps for v in p], default=-1)
        return cls(UndirectedGraph(n, edges), seps)


def edge_decision(source, S, S2, C, k: int, config: RunConfig, stats: Optional[dict] = None) -> str:
    """Remove only if every populated stratum of C is consistent with rank <= k."""
    codes, tables, counts = source.strata_arrays([tuple(S), tuple(S2)], tuple(C), config.min_count)
    if stats is not None:
        stats["tests"] = stats.get("tests", 0) + 1
    if len(codes) == 0:
        if stats is not None:
            stats["skipped"] = stats.get("skipped", 0) + 1
        return SKIPPED
    if source.exact:
        s = np.linalg.svd(tables, compute_uv=False)
        low = s[:, k] < config.population_rank_tol * s[:, 0] if s.shape[1] > k else np.ones(len(s), bool)
        return REMOVE if bool(np.all(low)) else KEEP
    for table, count in zip(tables, counts):
        try:
            res = chi2_rank_test(table, k, count, config.rank_variant, config.dof_rule)
        except DegenerateMatrixError:
            continue
        if stats is not None:
            stats["rank_tests"] = stats.get("rank_tests", 0) + 1
        if res.p_value <= config.removal_threshold:
            return KEEP
    return REMOVE


def _candidate_pairs(adj, n: int, size: int, per_edge: bool = False):
    """Supervariable pairs covering a live edge, endpoint-first, lexicographic.

    Unordered block pairs are visited once unless ``per_edge`` asks for a
    fresh visit under every designated endpoint pair.
    """
    seen = set()
    for i in range(n):
        for j in sorted(adj[i]):
            if j <= i:
                continue
            rest = [v for v in range(n) if v not in (i, j)]
            for A in itertools.combinations(rest, size - 1):
                rest2 = [v for v in rest if v not in A]
                for B in itertools.combinations(rest2, size - 1):
                    S, S2 = (i,) + A, (j,) + B
                    key = frozenset((frozenset(S), frozenset(S2)))
                    if per_edge:
                        key = (i, j, key)
                    if key in seen:
                        continue
                    seen.add(key)
                    yield S, S2


def run_phase1(source, k: int, config: Optional[RunConfig] = None) -> SkeletonState:
    """Prune the complete graph with coarsened conditional rank tests.

    Levels run over conditioning-set size; each level tests against a frozen
    snapshot of the graph and merges deletions afterwards, so the outcome
    does not depend on visit order.
    """
    config = config or RunConfig(k=k)
    n = source.n_vars
    size = block_size(k)
    if n < 2 * size:
        raise ValueError(f"need at least {2 * size} vertices for supervariables of size {size}")
    adj = [set(range(n)) - {v} for v in range(n)]
    sepsets = {}
    stats = {"tests": 0, "rank_tests": 0, "skipped": 0, "levels": 0, "removed_per_level": []}
    level = 0
    while True:
        delta = max(len(a) for a in adj)
        if level > size * delta * delta:
            break
        if config.max_level is not None and level > config.max_level:
            break
        snapshot = UndirectedGraph(n, [(a, b) for a in range(n) for b in adj[a] if a < b])
        removals = {}
        any_candidate = False
        for S, S2 in _candidate_pairs(adj, n, size, config.removal_scope == "endpoints"):
            if config.removal_scope == "endpoints":
                live = [frozenset((S[0], S2[0]))] if snapshot.adjacent(S[0], S2[0]) else []
            else:
                live = [frozenset((a, b)) for a in S for b in S2 if snapshot.adjacent(a, b)]
            if not live:
                continue
            if all(e in removals for e in live):
                continue
            block = set(S) | set(S2)
            pool = sorted(snapshot.neighborhood(block, config.candidate_radius) - block)
            if len(pool) < level:
                continue
            any_candidate = True
            for C in itertools.combinations(pool, level):
                if edge_decision(source, S, S2, C, k, config, stats) == REMOVE:
                    for e in live:
                        removals.setdefault(e, frozenset(C))
                    break
        for e, C in removals.items():
            a, b = tuple(e)
            adj[a].discard(b)
            adj[b].discard(a)
            sepsets[e] = C
        stats["removed_per_level"].append(len(removals))
        stats["levels"] = level + 1
        log.debug("phase1 level %d removed %d edges", level, len(removals))
        if not any_candidate:
            break
        level += 1
    g1 = UndirectedGraph(n, [(a, b) for a in range(n) for b in adj[a] if a < b])
    return SkeletonState(g1, sepsets, stats)
