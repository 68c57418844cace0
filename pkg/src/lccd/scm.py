"""Mixture structural causal models over binary variables.

A latent class ``u`` in ``0..k-1`` points into every observed vertex; each
vertex is Bernoulli with a bias looked up from ``(u, parent bits)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from lccd.graphs import Dag
from lccd.oracle import ExactDistribution
from lccd.rng import make_rng

EXACT_MAX_LOG_SIZE = 22
SAMPLE_SHARD_ROWS = 1 << 16


class MixtureScm:
    """DAG plus latent class prior and per-class Bernoulli tables.

    ``cpt[v]`` has shape ``(k, 2**len(parent_order[v]))``; column index is the
    little-endian code of the parents in ``parent_order[v]``.
    """

    def __init__(self, dag: Dag, k: int, prior, cpt: Sequence, parent_order: Optional[Sequence] = None):
        if k < 2:
            raise ValueError("k must be >= 2")
        self.dag = dag
        self.k = int(k)
        self.prior = np.asarray(prior, dtype=float)
        if self.prior.shape != (self.k,) or abs(self.prior.sum() - 1) > 1e-12 or np.any(self.prior < 0):
            raise ValueError("prior must be a length-k probability vector")
        if parent_order is None:
            parent_order = [tuple(sorted(dag.parents(v))) for v in range(dag.n)]
        self.parent_order = [tuple(int(p) for p in po) for po in parent_order]
        self.cpt = [np.asarray(t, dtype=float) for t in cpt]
        if len(self.cpt) != dag.n or len(self.parent_order) != dag.n:
            raise ValueError("one table per vertex required")
        for v in range(dag.n):
            if set(self.parent_order[v]) != set(dag.parents(v)):
                raise ValueError(f"table for vertex {v} must index exactly its parents")
            if self.cpt[v].shape != (self.k, 2 ** len(self.parent_order[v])):
                raise ValueError(f"table for vertex {v} has shape {self.cpt[v].shape}")
            if np.any(self.cpt[v] <= 0) or np.any(self.cpt[v] >= 1):
                raise ValueError(f"biases for vertex {v} must lie strictly inside (0, 1)")

    @property
    def n(self) -> int:
        return self.dag.n

    def to_json(self) -> dict:
        return {
            "dag": self.dag.to_json(),
            "k": self.k,
            "prior": self.prior.tolist(),
            "cpt": [
                {"vertex": v, "parents": list(self.parent_order[v]), "bias": self.cpt[v].tolist()}
                for v in range(self.n)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MixtureScm":
        dag = Dag.from_json(obj["dag"])
        entries = sorted(obj["cpt"], key=lambda e: e["vertex"])
        return cls(dag, obj["k"], obj["prior"], [e["bias"] for e in entries], [e["parents"] for e in entries])


class Dataset:
    """N binary rows over ``n_vars`` columns.

    True class labels, when known, are kept out of the public surface and
    only reachable through :meth:`diagnostic_labels`.
    """

    def __init__(self, values, labels=None):
        values = np.asarray(values)
        if values.ndim != 2:
            raise ValueError("dataset must be two-dimensional")
        if values.size and not np.isin(values, (0, 1)).all():
            raise ValueError("dataset cells must be 0 or 1")
        self.values = values.astype(np.uint8)
        self._labels = None if labels is None else np.asarray(labels, dtype=np.int64)
        if self._labels is not None and self._labels.shape != (len(self.values),):
            raise ValueError("one label per row required")

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def diagnostic_labels(self) -> Optional[np.ndarray]:
        return self._labels

    def to_csv(self, with_labels: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = [f"v{i}" for i in range(self.n_vars)]
        if with_labels:
            if self._labels is None:
                raise ValueError("dataset carries no labels")
            header.append("u")
        writer.writerow(header)
        for r, row in enumerate(self.values):
            out = row.tolist()
            if with_labels:
                out.append(int(self._labels[r]))
            writer.writerow(out)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        has_u = bool(header) and header[-1] == "u"
        names = header[:-1] if has_u else header
        if names != [f"v{i}" for i in range(len(names))]:
            raise ValueError(f"unexpected CSV header {header}")
        width = len(header)
        body = [r for r in rows[1:] if r]
        if any(len(r) != width for r in body):
            raise ValueError("ragged CSV rows")
        try:
            arr = np.array([[int(x) for x in r] for r in body], dtype=np.int64).reshape(len(body), width)
        except ValueError as exc:
            raise ValueError(f"non-integer CSV cell: {exc}") from None
        if has_u:
            return cls(arr[:, :-1], arr[:, -1])
        return cls(arr)


def default_equations(dag: Dag, k: int = 2) -> MixtureScm:
    """Bias (1 + sum of parents incl. U) / (#parents incl. U + 2), uniform prior.

    For k > 2 the latent class contributes u / (k - 1) to the sum.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    cpt = []
    order = []
    for v in range(dag.n):
        pa = tuple(sorted(dag.parents(v)))
        order.append(pa)
        codes = np.arange(2 ** len(pa))
        bit_sum = np.array([bin(c).count("1") for c in codes], dtype=float)
        u_term = np.arange(k, dtype=float)[:, None] / (k - 1)
        cpt.append((1.0 + u_term + bit_sum[None, :]) / (len(pa) + 1 + 2))
    return MixtureScm(dag, k, np.full(k, 1.0 / k), cpt, order)


def jitter(scm: MixtureScm, scale: float, seed) -> MixtureScm:
    """Perturb every bias by Uniform(-scale, scale), clipped inside (0, 1)."""
    rng = make_rng(seed, "jitter")
    eps = 1e-6
    cpt = [np.clip(t + rng.uniform(-scale, scale, size=t.shape), eps, 1 - eps) for t in scm.cpt]
    return MixtureScm(scm.dag, scm.k, scm.prior, cpt, scm.parent_order)


def random_equations(dag: Dag, k: int, seed, low: float = 0.1, high: float = 0.9) -> MixtureScm:
    rng = make_rng(seed, "random_equations")
    cpt = [rng.uniform(low, high, size=(k, 2 ** len(sorted(dag.parents(v))))) for v in range(dag.n)]
    prior = rng.dirichlet(np.full(k, 5.0))
    prior = prior / prior.sum()
    return MixtureScm(dag, k, prior, cpt)


def _parent_codes(values: np.ndarray, parents: Sequence[int]) -> np.ndarray:
    code = np.zeros(len(values), dtype=np.int64)
    for pos, p in enumerate(parents):
        code |= values[:, p].astype(np.int64) << pos
    return code


def _sample_shard(scm: MixtureScm, rows: int, seed, shard: int):
    rng = make_rng(seed, "sample", shard)
    u = rng.choice(scm.k, size=rows, p=scm.prior)
    values = np.zeros((rows, scm.n), dtype=np.uint8)
    for v in scm.dag.topological_order:
        bias = scm.cpt[v][u, _parent_codes(values, scm.parent_order[v])]
        values[:, v] = rng.random(rows) < bias
    return values, u


def sample(scm: MixtureScm, N: int, seed) -> Dataset:
    """Ancestral sampling; rows are drawn in fixed-size shards keyed by (seed, shard)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    parts = []
    for shard, start in enumerate(range(0, N, SAMPLE_SHARD_ROWS)):
        parts.append(_sample_shard(scm, min(SAMPLE_SHARD_ROWS, N - start), seed, shard))
    values = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([p[1] for p in parts])
    return Dataset(values, labels)


def exact_joint(scm: MixtureScm) -> ExactDistribution:
    """Pr(u, v_0..v_{n-1}) by chain-rule product in topological order."""
    n = scm.n
    if n + math.log2(scm.k) > EXACT_MAX_LOG_SIZE:
        raise ValueError(f"exact table of size {scm.k}*2^{n} exceeds the cap")
    table = scm.prior.reshape((scm.k,) + (1,) * n).copy()
    for v in scm.dag.topological_order:
        pa = scm.parent_order[v]
        bias = scm.cpt[v].reshape((scm.k,) + (2,) * len(pa), order="F") if pa else scm.cpt[v].reshape(scm.k)
        factor = np.stack([1.0 - bias, bias], axis=-1)  # axes: u, pa..., v
        axes = list(pa) + [v]
        perm = sorted(range(len(axes)), key=lambda i: axes[i])
        factor = np.transpose(factor, [0] + [1 + i for i in perm])
        shape = [scm.k] + [1] * n
        for ax in axes:
            shape[1 + ax] = 2
        table = table * factor.reshape(shape)
    return ExactDistribution(n, scm.k, table)


def load_scm(path) -> MixtureScm:
    with open(path) as fh:
        return MixtureScm.from_json(json.load(fh))
