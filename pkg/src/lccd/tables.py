"""Joint tables over blocks of vertices, from data or from an exact distribution.

Both sources answer the same question: for conditioning vertices ``cond``
and blocks ``B_1..B_m``, the table indexed ``[c, b_1, ..., b_m]`` over
little-endian codes. Discovery code is written against this interface so
the same pipeline runs on samples or on population tables.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Sequence

import numpy as np

from lccd.oracle import ExactDistribution

CACHE_ENTRIES = 4096


class UnderpopulatedStratum(ValueError):
    pass


def _arrange(table: np.ndarray, axes_vars: Sequence[int], blocks, cond) -> np.ndarray:
    """Rearrange a table with one binary axis per vertex into [c, b_1, ...] layout.

    ``table`` may carry leading non-vertex axes (e.g. the latent class).
    """
    lead = table.ndim - len(axes_vars)
    flat = list(cond) + [v for b in blocks for v in b]
    pos = {v: lead + i for i, v in enumerate(axes_vars)}
    perm = list(range(lead)) + [pos[v] for v in reversed(flat)]
    t = np.transpose(table, perm).reshape(table.shape[:lead] + (-1,))
    shape = (2 ** len(cond),) + tuple(2 ** len(b) for b in blocks)
    if lead == 0:
        return t.reshape(shape, order="F")
    return np.stack([row.reshape(shape, order="F") for row in t.reshape(-1, t.shape[-1])]).reshape(
        table.shape[:lead] + shape
    )


class _Cached:
    def __init__(self):
        self._cache = OrderedDict()

    def _union(self, vs: tuple) -> np.ndarray:
        hit = self._cache.get(vs)
        if hit is not None:
            self._cache.move_to_end(vs)
            return hit
        t = self._compute_union(vs)
        self._cache[vs] = t
        if len(self._cache) > CACHE_ENTRIES:
            self._cache.popitem(last=False)
        return t

    def _weights(self, blocks, cond) -> np.ndarray:
        flat = list(cond) + [v for b in blocks for v in b]
        if len(set(flat)) != len(flat):
            raise ValueError("blocks and conditioning set must be disjoint")
        vs = tuple(sorted(flat))
        return _arrange(self._union(vs), vs, blocks, cond)

    def joint(self, blocks, cond=()):
        """Unnormalised joint weights [c, b_1, ...] and per-stratum totals."""
        w = self._weights(blocks, cond)
        return w, w.reshape(w.shape[0], -1).sum(axis=1)

    def strata(self, blocks, cond=(), min_count=None):
        """(code, conditional table, count) for every populated stratum."""
        codes, tables, counts = self.strata_arrays(blocks, cond, min_count)
        return [(int(c), t, float(n)) for c, t, n in zip(codes, tables, counts)]

    def strata_arrays(self, blocks, cond=(), min_count=None):
        """Vectorised :meth:`strata`: codes, stacked conditional tables, counts."""
        w, per = self.joint(blocks, cond)
        codes = np.flatnonzero(per >= self.stratum_floor(min_count))
        tables = w[codes] / per[codes].reshape((-1,) + (1,) * (w.ndim - 1))
        return codes, tables, per[codes]


class EmpiricalSource(_Cached):
    exact = False

    def __init__(self, data, min_count: int = 1):
        super().__init__()
        self.data = data
        self.min_count = int(min_count)
        self._cols = np.ascontiguousarray(data.values.T.astype(np.int64))

    @property
    def n_vars(self) -> int:
        return self._cols.shape[0]

    @property
    def total(self) -> int:
        return self._cols.shape[1]

    def codes(self, order: Sequence[int]) -> np.ndarray:
        code = np.zeros(self._cols.shape[1], dtype=np.int64)
        for pos, v in enumerate(order):
            code |= self._cols[v] << pos
        return code

    def _compute_union(self, vs):
        counts = np.bincount(self.codes(vs), minlength=2 ** len(vs)).astype(float)
        return counts.reshape((2,) * len(vs), order="F")

    def joint_counts(self, blocks: Sequence[Sequence[int]], cond: Sequence[int] = ()) -> np.ndarray:
        return self._weights(blocks, cond)

    def stratum_floor(self, min_count):
        return max(self.min_count if min_count is None else min_count, 1)


class ExactSource(_Cached):
    """Population tables; counts are Pr(c) times a nominal sample size."""

    exact = True

    def __init__(self, dist: ExactDistribution, nominal_count: float = 1.0, min_prob: float = 1e-14):
        super().__init__()
        self.dist = dist
        self.nominal_count = float(nominal_count)
        self.min_prob = min_prob
        self._observed = dist.table.sum(axis=0)

    @property
    def n_vars(self) -> int:
        return self.dist.n_vars

    @property
    def total(self) -> float:
        return self.nominal_count

    def _compute_union(self, vs):
        drop = tuple(ax for ax in range(self.dist.n_vars) if ax not in vs)
        t = self._observed.sum(axis=drop) if drop else self._observed
        return t * self.nominal_count

    def stratum_floor(self, min_count):
        return self.min_prob * self.nominal_count

    def joint_with_class(self, blocks, cond=()):
        """Pr(u, c, b_1..b_m); only available for population tables."""
        flat = set(cond) | {v for b in blocks for v in b}
        keep = sorted(flat)
        drop = tuple(1 + ax for ax in range(self.dist.n_vars) if ax not in flat)
        t = self.dist.table.sum(axis=drop) if drop else self.dist.table
        return _arrange(t, keep, blocks, cond)
