"""Three-block k-mixtures of product distributions (k-MixProd).

A table ``P[a, b, c]`` over three disjoint blocks is modelled as
``sum_u w[u] * A[a, u] * B[b, u] * C[c, u]``. The solver runs EM from a
spectral (Jennrich) start plus random restarts and keeps the best
likelihood. Solutions from different conditioning strata carry arbitrary
component labels; :func:`align_runs` makes them consistent and
:func:`decondition` averages the strata back out.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from lccd.config import RunConfig
from lccd.oracle import ZeroProbabilityError
from lccd.rng import make_rng

log = logging.getLogger(__name__)

DEGENERATE_TV = 1e-3
DEGENERATE_WEIGHT = 1e-6
ENUMERATE_PERMUTATIONS_UP_TO = 6
EXACT_FIT_TV = 1e-10


class AllmanConditionError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def allman_holds(cardinalities: Sequence[int], k: int) -> bool:
    """Generic identifiability of a 3-block mixture: sum min(kappa, k) >= 2k + 2."""
    if k == 1:
        return True
    return sum(min(c, k) for c in cardinalities) >= 2 * k + 2


@dataclass
class MixProdInstance:
    """Joint table over three blocks, conditional on ``cond = z``."""

    blocks: tuple
    table: np.ndarray
    count: float = 1.0
    cond: tuple = ()
    z: int = 0

    def __post_init__(self):
        self.blocks = tuple(tuple(int(v) for v in b) for b in self.blocks)
        self.table = np.asarray(self.table, dtype=float)
        if len(self.blocks) != 3 or self.table.ndim != 3:
            raise ValueError("k-MixProd instances have exactly three blocks")
        flat = [v for b in self.blocks for v in b] + list(self.cond)
        if len(set(flat)) != len(flat):
            raise ValueError("blocks and conditioning set must be pairwise disjoint")
        if self.table.shape != tuple(2 ** len(b) for b in self.blocks):
            raise ValueError(f"table shape {self.table.shape} does not match blocks")
        total = self.table.sum()
        if total <= 0 or np.any(self.table < 0):
            raise ValueError("table must be non-negative with positive mass")
        self.table = self.table / total

    @property
    def cardinalities(self) -> tuple:
        return self.table.shape


@dataclass
class MixProdSolution:
    weights: np.ndarray
    conditionals: list
    residual: float = 0.0
    log_likelihood: float = -math.inf
    converged: bool = True
    degenerate: bool = False
    alignment: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.weights)

    def permuted(self, perm: Sequence[int]) -> "MixProdSolution":
        """Relabel so that new component ``u`` is old component ``perm[u]``."""
        perm = list(perm)
        base = self.alignment or tuple(range(self.k))
        return MixProdSolution(
            self.weights[perm].copy(),
            [c[:, perm].copy() for c in self.conditionals],
            self.residual,
            self.log_likelihood,
            self.converged,
            self.degenerate,
            tuple(base[p] for p in perm),
            dict(self.diagnostics),
        )

    def joint(self) -> np.ndarray:
        A, B, C = self.conditionals
        return np.einsum("u,au,bu,cu->abc", self.weights, A, B, C)

    def to_json(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "conditionals": [c.tolist() for c in self.conditionals],
            "residual": self.residual,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "alignment": list(self.alignment),
            "diagnostics": self.diagnostics,
        }


def _normalize_columns(M: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    M = np.clip(M, floor, None)
    return M / M.sum(axis=0, keepdims=True)


def _log_likelihood(P, w, A, B, C) -> float:
    M = np.einsum("u,au,bu,cu->abc", w, A, B, C)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(M[mask])))


def _em(P, w, A, B, C, max_iter: int, tol: float):
    """EM for a 3-block mixture on a normalised table. Returns params, ll trace, converged."""
    mask = P > 0
    trace = [_log_likelihood(P, w, A, B, C)]
    converged = False
    for _ in range(max_iter):
        M = np.einsum("u,au,bu,cu->abc", w, A, B, C)
        Q = np.zeros_like(P)
        Q[mask] = P[mask] / M[mask]
        A_new = A * np.einsum("abc,bu,cu->au", Q, B, C) * w
        B_new = B * np.einsum("abc,au,cu->bu", Q, A, C) * w
        C_new = C * np.einsum("abc,au,bu->cu", Q, A, B) * w
        w = A_new.sum(axis=0)
        A = A_new / w
        B = B_new / B_new.sum(axis=0)
        C = C_new / C_new.sum(axis=0)
        w = w / w.sum()
        ll = _log_likelihood(P, w, A, B, C)
        if ll < trace[-1] - 1e-9 * max(1.0, abs(trace[-1])):
            raise AssertionError(f"EM log-likelihood decreased: {trace[-1]} -> {ll}")
        trace.append(ll)
        if abs(ll - trace[-2]) <= tol * max(1.0, abs(ll)):
            converged = True
            break
    return (w, A, B, C), trace, converged


def _spectral_init(P: np.ndarray, k: int, rng):
    """Jennrich simultaneous diagonalisation on the two largest modes.

    Returns ``(w, A, B, C)`` in the original mode order, or None when the
    mode sizes or the eigenproblem do not permit it.
    """
    order = sorted(range(3), key=lambda m: -P.shape[m])
    p, q, r = order
    if P.shape[q] < k:
        return None
    T = np.transpose(P, (p, q, r))
    U, _, Vt = np.linalg.svd(T.sum(axis=2))
    U, V = U[:, :k], Vt[:k].T
    x, y = rng.standard_normal(T.shape[2]), rng.standard_normal(T.shape[2])
    Mx = U.T @ np.tensordot(T, x, axes=(2, 0)) @ V
    My = U.T @ np.tensordot(T, y, axes=(2, 0)) @ V
    try:
        vals, vecs = np.linalg.eig(Mx @ np.linalg.inv(My))
    except np.linalg.LinAlgError:
        return None
    if np.max(np.abs(vals.imag)) > 1e-6 * max(1.0, np.max(np.abs(vals.real))):
        return None
    Ap = U @ vecs.real
    Ap = Ap * np.sign(Ap.sum(axis=0) + 1e-300)
    Ap = _normalize_columns(Ap)
    # pinv(A) applied to the mode-p unfolding leaves w_u * (b_u outer c_u) per row
    rest = np.linalg.pinv(Ap) @ T.reshape(T.shape[0], -1)
    Bq = np.zeros((T.shape[1], k))
    Cr = np.zeros((T.shape[2], k))
    w = np.zeros(k)
    for u in range(k):
        R = rest[u].reshape(T.shape[1], T.shape[2])
        w[u] = max(R.sum(), 1e-12)
        Bq[:, u] = R.sum(axis=1)
        Cr[:, u] = R.sum(axis=0)
    factors = [None, None, None]
    factors[p], factors[q], factors[r] = Ap, _normalize_columns(Bq), _normalize_columns(Cr)
    return w / w.sum(), factors[0], factors[1], factors[2]


def _random_init(shape, k: int, rng):
    w = rng.dirichlet(np.ones(k))
    return (w,) + tuple(rng.dirichlet(np.ones(s), size=k).T for s in shape)


def _component_tv(conditionals, weights) -> float:
    """Smallest TV distance between the product distributions of two components."""
    k = len(weights)
    if k < 2:
        return math.inf
    best = math.inf
    for u, v in itertools.combinations(range(k), 2):
        pu = np.einsum("a,b,c->abc", *(c[:, u] for c in conditionals))
        pv = np.einsum("a,b,c->abc", *(c[:, v] for c in conditionals))
        best = min(best, 0.5 * float(np.abs(pu - pv).sum()))
    return best


def solve_mixprod(inst: MixProdInstance, k: int, config: Optional[RunConfig] = None,
                  seed=None, stream: tuple = ()) -> MixProdSolution:
    """Fit a k-component product mixture to ``inst.table``.

    Random restarts draw from ``(seed, "mixprod", *stream, z)`` so that
    every stratum of every edge gets its own reproducible stream.
    """
    config = config or RunConfig()
    if k < 1:
        raise ValueError("k must be >= 1")
    if not allman_holds(inst.cardinalities, k):
        raise AllmanConditionError(f"cardinalities {inst.cardinalities} cannot identify k={k}")
    P = inst.table
    if k == 1:
        cond = [P.sum(axis=(1, 2))[:, None], P.sum(axis=(0, 2))[:, None], P.sum(axis=(0, 1))[:, None]]
        sol = MixProdSolution(np.ones(1), cond, alignment=(0,))
        sol.residual = 0.5 * float(np.abs(sol.joint() - P).sum())
        sol.log_likelihood = _log_likelihood(P, sol.weights, *cond)
        return sol
    seed = config.seed if seed is None else seed
    rng = make_rng(seed, "mixprod", *stream, inst.z)
    starts = []
    if config.spectral_init:
        init = _spectral_init(P, k, rng)
        if init is not None:
            starts.append(("spectral", init))
    for r in range(config.em_restarts):
        starts.append((f"random{r}", _random_init(P.shape, k, rng)))
    if not starts:
        starts.append(("random0", _random_init(P.shape, k, rng)))
    best = None
    used = 0
    for name, init in starts:
        params, trace, converged = _em(P, *init, config.em_max_iter, config.em_tol)
        used += 1
        if best is None or trace[-1] > best[1][-1] + 1e-12:
            best = (params, trace, converged, name)
        # an exact fit cannot be beaten; skip the remaining restarts
        if 0.5 * np.abs(np.einsum("u,au,bu,cu->abc", *best[0]) - P).sum() < EXACT_FIT_TV:
            break
    (w, A, B, C), trace, converged, name = best
    sol = MixProdSolution(w, [A, B, C], log_likelihood=trace[-1], converged=converged, alignment=tuple(range(k)))
    sol.residual = 0.5 * float(np.abs(sol.joint() - P).sum())
    flat = max((P.reshape(P.shape[0], -1), P.transpose(1, 0, 2).reshape(P.shape[1], -1),
                P.transpose(2, 0, 1).reshape(P.shape[2], -1)), key=lambda m: min(m.shape))
    s = np.linalg.svd(flat, compute_uv=False)
    low_rank = len(s) < k or s[k - 1] < 1e-6 * s[0]
    sol.degenerate = bool(low_rank or w.min() < DEGENERATE_WEIGHT
                          or _component_tv(sol.conditionals, w) < DEGENERATE_TV)
    sol.diagnostics = {"restarts": used, "iterations": len(trace) - 1, "best_start": name}
    if not converged:
        log.warning("k-MixProd EM hit %d iterations without converging", config.em_max_iter)
    return sol


def best_permutation(ref: np.ndarray, other: np.ndarray, tie_tol: float = 1e-6):
    """Permutation ``perm`` minimising sum_u TV(ref[:, u], other[:, perm[u]]).

    Returns ``(perm, cost, ambiguous)``.
    """
    k = ref.shape[1]
    cost = 0.5 * np.abs(ref[:, :, None] - other[:, None, :]).sum(axis=0)
    if k <= ENUMERATE_PERMUTATIONS_UP_TO:
        scored = sorted((float(cost[range(k), list(p)].sum()), p) for p in itertools.permutations(range(k)))
        ambiguous = len(scored) > 1 and scored[1][0] - scored[0][0] < tie_tol
        return list(scored[0][1]), scored[0][0], ambiguous
    rows, cols = linear_sum_assignment(cost)
    perm = [int(c) for _, c in sorted(zip(rows, cols))]
    return perm, float(cost[rows, cols].sum()), False


def align_runs(solutions: dict, n_cond: int, mb_map: dict, tie_tol: float = 1e-6):
    """Give every stratum's solution the labels of a common reference.

    ``solutions`` maps a stratum code ``z`` (little-endian over ``n_cond``
    conditioning vertices) to its solution. ``mb_map`` maps a block index to
    the set of conditioning positions inside that block's Markov boundary;
    only blocks listed there serve as alignment variables. Strata are
    visited breadth-first over Hamming-1 neighbours so permutations compose
    along a spanning tree.

    Returns ``(aligned, diagnostics)``; raises :class:`AlignmentError` when a
    populated stratum cannot be reached or an alignment is ambiguous.
    """
    if not solutions:
        return {}, {"edges": 0}
    root = min(solutions)
    aligned = {root: solutions[root].permuted(range(solutions[root].k))}
    queue = deque([root])
    edges = 0
    while queue:
        z = queue.popleft()
        for bit in range(n_cond):
            nz = z ^ (1 << bit)
            if nz not in solutions or nz in aligned:
                continue
            usable = [b for b in sorted(mb_map) if bit not in mb_map[b]]
            if not usable:
                continue
            blk = usable[0]
            perm, cost, ambiguous = best_permutation(
                aligned[z].conditionals[blk], solutions[nz].conditionals[blk], tie_tol
            )
            if ambiguous:
                raise AlignmentError(f"ambiguous alignment between strata {z} and {nz} (cost {cost:.3g})")
            aligned[nz] = solutions[nz].permuted(perm)
            aligned[nz].diagnostics["alignment_cost"] = cost
            edges += 1
            queue.append(nz)
    missing = sorted(set(solutions) - set(aligned))
    if missing:
        raise AlignmentError(f"strata {missing} have no Hamming-1 path with a usable alignment block")
    return aligned, {"edges": edges, "root": root}


def decondition(aligned: dict, pz: dict, block: int = 0):
    """Average aligned per-stratum solutions back to ``Pr(B | u)`` and ``Pr(u)``.

    Pr(B|u) = sum_z Pr(u|z) Pr(z) Pr(B|z,u) / sum_z Pr(z) Pr(u|z). Strata
    without a solution are dropped and ``pz`` is renormalised over the rest.
    """
    if not aligned:
        raise ValueError("no solutions to decondition")
    present = sorted(aligned)
    mass = np.array([float(pz[z]) for z in present])
    total = float(sum(pz.values()))
    skipped = 1.0 - mass.sum() / total if total > 0 else 0.0
    if skipped > 1e-12:
        log.warning("renormalising away %.3g of stratum mass", skipped)
    mass = mass / mass.sum()
    W = np.stack([aligned[z].weights for z in present])
    prior = mass @ W
    if np.any(prior <= 0):
        raise ZeroProbabilityError("a latent class has zero total probability")
    acc = sum(m * aligned[z].weights[None, :] * aligned[z].conditionals[block] for m, z in zip(mass, present))
    return acc / prior[None, :], prior
