"""False-positive edge correction through k-MixProd instances.

For an edge ``(i, j)`` of the Phase I graph, the block ``T`` holds both
endpoints and their neighbours; two further blocks ``X1`` and ``X2`` are
picked far enough from ``T`` and from each other that conditioning on the
2-neighbourhoods ``Z`` of ``X1`` and ``X2`` makes the three blocks
independent within each latent class. Solving one k-MixProd instance per
assignment ``z``, aligning the labels and averaging ``z`` back out yields
``Pr(T | u)``, on which ordinary conditional-independence tests decide
whether the edge is real.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from lccd.config import RunConfig
from lccd.graphs import UndirectedGraph
from lccd.mixprod import (
    AlignmentError,
    AllmanConditionError,
    MixProdInstance,
    align_runs,
    allman_holds,
    decondition,
    solve_mixprod,
)
from lccd.oracle import ZeroProbabilityError
from lccd.phase1 import SkeletonState, pair_key

log = logging.getLogger(__name__)

REMOVED, KEPT, UNRESOLVED = "removed", "kept", "unresolved"


class VertexExhaustion(ValueError):
    pass


@dataclass(frozen=True)
class Phase2Instance:
    edge: tuple
    T: tuple
    X1: tuple
    X2: tuple
    Z: tuple

    @property
    def blocks(self) -> tuple:
        return (self.T, self.X1, self.X2)

    def to_json(self) -> dict:
        return {"edge": list(self.edge), "T": list(self.T), "X1": list(self.X1), "X2": list(self.X2),
                "Z": list(self.Z)}


def _guard(k: int, t: int, a: int, b: int) -> bool:
    """True while the X blocks are still too small."""
    return 2 ** a + 2 ** b < 2 * k + 2 - min(k, 2 ** t)


def build_instance(g1: UndirectedGraph, i: int, j: int, k: int) -> Phase2Instance:
    """Greedy block construction on the Phase I graph.

    Candidates keep distance > 2 from ``T`` and from the other X block.
    Among them we prefer a vertex whose 2-neighbourhood stays disjoint from
    the other block's (so every coordinate of ``Z`` leaves one block
    untouched for alignment), then the smallest resulting 2-neighbourhood,
    then the lowest index.
    """
    T = {i, j} | g1.neighbors(i) | g1.neighbors(j)
    pool = set(range(g1.n)) - T - g1.neighborhood(T, 2)
    X = [set(), set()]

    def nb2(S):
        return g1.neighborhood(S, 2) if S else frozenset()

    def candidates(side):
        other = X[1 - side]
        return sorted(pool - X[side] - other - nb2(other))

    def pick(side):
        other = X[1 - side]
        best = None
        for v in candidates(side):
            grown = X[side] | {v}
            reach = nb2(grown)
            # an empty other block still needs a candidate
            if not other and not pool - grown - reach:
                continue
            key = (bool(reach & (nb2(other) | other)), len(reach), v)
            if best is None or key < best:
                best = key
        if best is None:
            raise VertexExhaustion(f"edge {pair_key(i, j)}: no vertex left for X{side + 1}")
        X[side].add(best[2])

    while _guard(k, len(T), len(X[0]), len(X[1])):
        pick(0)
        if not _guard(k, len(T), len(X[0]), len(X[1])):
            break
        pick(1)
    X1, X2 = tuple(sorted(X[0])), tuple(sorted(X[1]))
    Z = tuple(sorted((nb2(X[0]) | nb2(X[1])) - X[0] - X[1]))
    if set(Z) & T:
        raise VertexExhaustion(f"edge {pair_key(i, j)}: conditioning set meets T")
    T = (min(i, j), max(i, j)) + tuple(sorted(T - {i, j}))
    if not allman_holds((2 ** len(T), 2 ** len(X1), 2 ** len(X2)), k):
        raise AllmanConditionError(f"edge {pair_key(i, j)}: blocks too small to identify k={k}")
    return Phase2Instance((min(i, j), max(i, j)), T, X1, X2, Z)


def conditional_mutual_information(table: np.ndarray, a: int, b: int, C) -> float:
    """I(a; b | C) in nats for a joint over binary axes."""
    C = list(C)
    keep = sorted([a, b] + C)
    drop = tuple(ax for ax in range(table.ndim) if ax not in keep)
    t = table.sum(axis=drop) if drop else table
    pos = {v: n for n, v in enumerate(keep)}
    t = np.moveaxis(t, [pos[a], pos[b]] + [pos[c] for c in C], list(range(len(keep))))
    t = t.reshape(2, 2, -1)
    t = t / t.sum()
    pc = t.sum(axis=(0, 1))
    pac = t.sum(axis=1)
    pbc = t.sum(axis=0)
    num = t * pc[None, None, :]
    den = pac[:, None, :] * pbc[None, :, :]
    mask = t > 0
    return float(np.sum(t[mask] * np.log(num[mask] / den[mask])))


def within_class_separator(table_t_given_u: np.ndarray, n_t: int, k: int, prior, config: RunConfig,
                           total: Optional[float], exact: bool):
    """Smallest C over T's non-endpoint positions separating positions 0 and 1 in every class."""
    rest = list(range(2, n_t))
    cols = [table_t_given_u[:, u].reshape((2,) * n_t, order="F") for u in range(k)]
    for size in range(len(rest) + 1):
        for C in itertools.combinations(rest, size):
            ok = True
            for u in range(k):
                cmi = conditional_mutual_information(cols[u], 0, 1, C)
                if exact:
                    ok = cmi < config.oracle_ci_tol
                else:
                    g = 2.0 * total * prior[u] * max(cmi, 0.0)
                    ok = stats.chi2.sf(g, 2 ** len(C)) > config.ci_alpha / k
                if not ok:
                    break
            if ok:
                return C
    return None


def recover_block_given_class(source, inst: Phase2Instance, g1: UndirectedGraph, k: int, config: RunConfig):
    """Pr(T | u) and Pr(u) from one solver call per populated stratum of Z.

    Alignment uses X1 and X2 only: their conditionals depend on ``z`` solely
    through the coordinates inside their own 2-neighbourhoods.
    """
    w, per = source.joint(list(inst.blocks), inst.Z)
    floor = source.stratum_floor(config.min_count)
    solutions = {}
    skipped = 0
    residuals = []
    for z in range(w.shape[0]):
        if per[z] < floor:
            skipped += 1
            continue
        mp = MixProdInstance(inst.blocks, w[z], float(per[z]), inst.Z, z)
        sol = solve_mixprod(mp, k, config, stream=inst.edge)
        solutions[z] = sol
        residuals.append(sol.residual)
    if not solutions:
        raise ValueError("no populated stratum")
    mb_map = {}
    for b, X in ((1, inst.X1), (2, inst.X2)):
        reach = g1.neighborhood(X, 2)
        mb_map[b] = {n for n, v in enumerate(inst.Z) if v in reach}
    aligned, align_diag = align_runs(solutions, len(inst.Z), mb_map, config.alignment_tie_tol)
    pz = {z: float(per[z]) for z in range(w.shape[0])}
    table, prior = decondition(aligned, pz, block=0)
    diag = {
        "solver_calls": len(solutions),
        "strata_skipped": skipped,
        "max_residual": max(residuals),
        "degenerate_strata": sum(1 for s in solutions.values() if s.degenerate),
        "alignment": align_diag,
    }
    return table, prior, diag


def run_phase2(source, state: SkeletonState, k: int, config: Optional[RunConfig] = None) -> SkeletonState:
    """Test every Phase I edge for a within-class separator inside its T block.

    Edges are judged independently against the Phase I graph; deletions are
    merged afterwards in sorted order. Edges whose instance cannot be built
    or solved are kept and reported as unresolved.
    """
    config = config or RunConfig(k=k)
    g1 = state.g1
    removals = {}
    report = {}
    for i, j in sorted(g1.edges):
        key = pair_key(i, j)
        try:
            inst = build_instance(g1, i, j, k)
        except (VertexExhaustion, AllmanConditionError) as exc:
            report[key] = {"status": UNRESOLVED, "reason": str(exc)}
            continue
        try:
            table, prior, diag = recover_block_given_class(source, inst, g1, k, config)
        except (AlignmentError, ZeroProbabilityError, AllmanConditionError, ValueError) as exc:
            report[key] = {"status": UNRESOLVED, "reason": str(exc), "instance": inst.to_json()}
            continue
        C = within_class_separator(table, len(inst.T), k, prior, config, source.total, source.exact)
        entry = {"instance": inst.to_json(), **diag}
        if C is None:
            entry["status"] = KEPT
        else:
            sep = frozenset(inst.T[c] for c in C)
            removals[frozenset((i, j))] = sep
            entry["status"] = REMOVED
            entry["sepset"] = sorted(sep)
        report[key] = entry
    g2 = g1.without([tuple(e) for e in removals])
    sepsets = dict(state.sepsets)
    sepsets.update(removals)
    diagnostics = dict(state.diagnostics)
    diagnostics["phase2"] = report
    return SkeletonState(g2, sepsets, diagnostics)
