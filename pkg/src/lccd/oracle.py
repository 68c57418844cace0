"""Brute-force ground truth used to certify the fast paths on small graphs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from lccd.graphs import Dag, GraphError

ORACLE_MAX_VERTICES = 10
POPULATION_RANK_TOL = 1e-9


class ZeroProbabilityError(ValueError):
    pass


def encode(bits: Sequence[int]) -> int:
    """Little-endian integer code of a bit assignment."""
    return sum(int(b) << i for i, b in enumerate(bits))


def decode(code: int, width: int) -> tuple:
    return tuple((code >> i) & 1 for i in range(width))


@dataclass(frozen=True)
class ExactDistribution:
    """Full table Pr(u, v_0..v_{n-1}); axis 0 is u, axis 1+v is vertex v."""

    n_vars: int
    k: int
    table: np.ndarray

    def __post_init__(self):
        if self.table.shape != (self.k,) + (2,) * self.n_vars:
            raise ValueError(f"table shape {self.table.shape} does not match k={self.k}, n={self.n_vars}")
        if np.any(self.table < 0) or abs(self.table.sum() - 1.0) > 1e-10:
            raise ValueError("table is not a probability distribution")

    def marginal(self, order: Sequence[int], with_u: bool = False) -> np.ndarray:
        """Probabilities indexed by the little-endian code over ``order``.

        With ``with_u`` the result has shape (k, 2**len(order)).
        """
        order = [int(v) for v in order]
        if len(set(order)) != len(order):
            raise ValueError("repeated vertex in order")
        keep = [1 + v for v in order]
        drop = tuple(ax for ax in range(1, self.n_vars + 1) if ax not in keep)
        t = self.table.sum(axis=drop) if drop else self.table
        # remaining axes are in increasing vertex order; move to reversed order
        remaining = sorted(keep)
        perm = [remaining.index(ax) + 1 for ax in reversed(keep)]
        t = np.transpose(t, [0] + perm).reshape(self.k, -1)
        return t if with_u else t.sum(axis=0)

    def joint_blocks(self, blocks: Sequence[Sequence[int]], cond: Sequence[int] = (), with_u: bool = False):
        """Joint table with shape (2**|cond|, K_1, ..., K_m) (prefixed by k with u)."""
        flat = list(cond) + [v for b in blocks for v in b]
        shape = (2 ** len(cond),) + tuple(2 ** len(b) for b in blocks)
        m = self.marginal(flat, with_u=with_u)
        if with_u:
            return np.stack([row.reshape(shape, order="F") for row in m])
        return m.reshape(shape, order="F")

    def prior(self) -> np.ndarray:
        return self.table.reshape(self.k, -1).sum(axis=1)


def exact_prob_matrix(d: ExactDistribution, S: Sequence[int], S2: Sequence[int], C: Sequence[int] = (), c=0) -> np.ndarray:
    """Pr(S=x, S2=y | C=c) as a matrix over little-endian codes of S and S2."""
    S, S2, C = list(S), list(S2), list(C)
    if set(S) & set(S2) or set(S) & set(C) or set(S2) & set(C):
        raise ValueError("S, S2 and C must be disjoint")
    code = c if isinstance(c, (int, np.integer)) else encode(c)
    joint = d.joint_blocks([S, S2], C)[code]
    mass = joint.sum()
    if mass <= 0:
        raise ZeroProbabilityError(f"Pr(C={code}) is zero")
    return joint / mass


def singular_values(M: np.ndarray) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def numeric_rank(M: np.ndarray, rel_tol: float = POPULATION_RANK_TOL) -> int:
    s = singular_values(M)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s >= rel_tol * s[0]))


def rank_at_most(M: np.ndarray, k: int, rel_tol: float = POPULATION_RANK_TOL) -> bool:
    s = singular_values(M)
    if s.size <= k:
        return True
    return bool(s[k] < rel_tol * s[0])


def _simple_paths(adj, s, t):
    stack = [(s, [s])]
    while stack:
        v, path = stack.pop()
        for w in adj[v]:
            if w in path:
                continue
            if w == t:
                yield path + [w]
            else:
                stack.append((w, path + [w]))


def oracle_d_separated(g: Dag, S: Iterable[int], S2: Iterable[int], C: Iterable[int] = ()) -> bool:
    """d-separation by enumerating every simple path and applying the activation rules."""
    if g.n > ORACLE_MAX_VERTICES:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_VERTICES}")
    S, S2, C = set(S), set(S2), set(C)
    if S & S2 or S & C or S2 & C:
        raise GraphError("S, S2 and C must be pairwise disjoint")
    adj = [set(g.parents(v)) | set(g.children(v)) for v in range(g.n)]
    opened = {m for m in range(g.n) if m in C or g.descendants_of([m]) & C}
    for s in S:
        for t in S2:
            for path in _simple_paths(adj, s, t):
                active = True
                for a, m, b in zip(path, path[1:], path[2:]):
                    collider = (a, m) in g.edges and (b, m) in g.edges
                    if collider and m not in opened:
                        active = False
                        break
                    if not collider and m in C:
                        active = False
                        break
                if active:
                    return False
    return True


def oracle_separating_set(g: Dag, i: int, j: int) -> Optional[frozenset]:
    """Smallest separating set (lexicographic tie-break) by exhaustive search."""
    if g.n > ORACLE_MAX_VERTICES:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_VERTICES}")
    if g.adjacent(i, j):
        return None
    rest = [v for v in range(g.n) if v not in (i, j)]
    for size in range(len(rest) + 1):
        for C in itertools.combinations(rest, size):
            if oracle_d_separated(g, {i}, {j}, C):
                return frozenset(C)
    raise AssertionError("nonadjacent pair without separating set")
