"""Reproduction experiments with plot-ready CSV and JSON summaries.

test1  chi-square p-values and third singular values, Split vs Connected.
test2  per-pair retention frequencies on the Y graph.
test3  edge and non-edge recovery on random 7-vertex DAGs of varying density.

Each run is a pure function of ``(config, run index)``; runs may execute in
a process pool and are merged in index order, so outputs do not depend on
the worker count.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from lccd.config import RunConfig
from lccd.graphs import Dag, random_dag
from lccd.pipeline import discover
from lccd.rank import chi2_rank_test, empirical_prob_matrix
from lccd.scm import default_equations, sample
from lccd.tables import EmpiricalSource

CONNECTED = Dag(4, [(0, 1), (1, 2), (2, 3)])
SPLIT = Dag(4, [(0, 1), (2, 3)])
Y_GRAPH = Dag(7, [(0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)])

TEST1_SIZES = (1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000)
DENSITIES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
FULL_RUNS = {"test1": 200, "test2": 100, "test3": 20}
QUICK_RUNS = {"test1": 20, "test2": 20, "test3": 5}


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    summary: dict

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        return buf.getvalue()

    def json_text(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True) + "\n"

    def write(self, outdir) -> tuple:
        os.makedirs(outdir, exist_ok=True)
        csv_path = os.path.join(outdir, f"{self.name}.csv")
        json_path = os.path.join(outdir, f"{self.name}.json")
        with open(csv_path, "w") as fh:
            fh.write(self.csv_text())
        with open(json_path, "w") as fh:
            fh.write(self.json_text())
        return csv_path, json_path


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _median(xs) -> float:
    return float(np.median(xs)) if len(xs) else float("nan")


# test1

def _test1_task(task):
    graph, N, seed, config = task
    dag = SPLIT if graph == "split" else CONNECTED
    data = sample(default_equations(dag, 2), N, (config.seed, seed))
    A = empirical_prob_matrix(data, (0, 1), (2, 3))
    res = chi2_rank_test(A, 2, variant=config.rank_variant, dof_rule=config.dof_rule)
    return [graph, N, seed, res.p_value, res.statistic, res.dof, res.sigma_kplus1]


def test1(config: RunConfig, runs: int, sizes=TEST1_SIZES) -> ExperimentResult:
    tasks = [(g, N, s, config) for N in sizes for g in ("split", "connected") for s in range(runs)]
    rows = _map(_test1_task, tasks, config.workers)
    summary = {"runs": runs, "dof_rule": config.dof_rule, "rank_variant": config.rank_variant, "by_N": {}}
    for N in sizes:
        entry = {}
        for g in ("split", "connected"):
            ps = [r[3] for r in rows if r[0] == g and r[1] == N]
            sv = [r[6] for r in rows if r[0] == g and r[1] == N]
            entry[f"{g}_median_p"] = _median(ps)
            entry[f"{g}_median_sigma3"] = _median(sv)
        entry["median_p_gap"] = entry["split_median_p"] - entry["connected_median_p"]
        summary["by_N"][str(N)] = entry
    return ExperimentResult("test1", ["graph", "N", "seed", "p_value", "statistic", "dof", "sigma3"], rows, summary)


# test2

def _test2_task(task):
    seed, N, config = task
    data = sample(default_equations(Y_GRAPH, config.k), N, (config.seed, seed))
    result = discover(EmpiricalSource(data, config.min_count), config)
    return sorted(result.skeleton.g1.edges)


def test2(config: RunConfig, runs: int, N: int = 10000) -> ExperimentResult:
    outs = _map(_test2_task, [(s, N, config) for s in range(runs)], config.workers)
    truth = Y_GRAPH.skeleton()
    rows = []
    freq = {}
    for seed, edges in enumerate(outs):
        got = set(edges)
        for a, b in itertools.combinations(range(Y_GRAPH.n), 2):
            kept = (a, b) in got
            rows.append([seed, a, b, int(truth.adjacent(a, b)), int(kept)])
            freq[(a, b)] = freq.get((a, b), 0) + kept
    table = {f"{a}-{b}": freq[(a, b)] / runs for a, b in sorted(freq)}
    true_f = [v for (a, b), v in freq.items() if truth.adjacent(a, b)]
    false_f = [v for (a, b), v in freq.items() if not truth.adjacent(a, b)]
    summary = {
        "runs": runs,
        "N": N,
        "retention": table,
        "min_true_edge_frequency": min(true_f) / runs,
        "max_non_edge_frequency": max(false_f) / runs,
    }
    return ExperimentResult("test2", ["seed", "a", "b", "true_edge", "retained"], rows, summary)


# test3

def graph_seed(config: RunConfig, density_index: int, graph_index: int) -> int:
    return config.seed * 100003 + 1000 * density_index + graph_index


def recovery_rates(truth: Dag, edges) -> tuple:
    """(true-edge recovery, true-non-edge recovery); an empty class counts as fully recovered."""
    true = set(truth.skeleton().edges)
    got = {tuple(sorted(e)) for e in edges}
    pairs = set(itertools.combinations(range(truth.n), 2))
    tp = len(true & got) / len(true) if true else 1.0
    non = pairs - true
    tn = len(non - got) / len(non) if non else 1.0
    return tp, tn


def _test3_task(task):
    di, gi, p, N, n, config = task
    seed = graph_seed(config, di, gi)
    dag = random_dag(n, p, seed)
    data = sample(default_equations(dag, config.k), N, seed)
    result = discover(EmpiricalSource(data, config.min_count), config)
    tp, tn = recovery_rates(dag, result.skeleton.g1.edges)
    max_in = max((len(dag.parents(v)) for v in range(n)), default=0)
    return [p, gi, seed, len(dag.edges), max_in, tp, tn, 0.5 * (tp + tn)]


def test3(config: RunConfig, runs: int, densities=DENSITIES, N: int = 10000, n: int = 7) -> ExperimentResult:
    tasks = [(di, gi, p, N, n, config) for di, p in enumerate(densities) for gi in range(runs)]
    rows = _map(_test3_task, tasks, config.workers)
    by_density = {}
    for p in densities:
        rs = [r for r in rows if r[0] == p]
        by_density[repr(p)] = {
            "median_true_edge_recovery": _median([r[5] for r in rs]),
            "median_true_non_edge_recovery": _median([r[6] for r in rs]),
            "median_balanced_recovery": _median([r[7] for r in rs]),
            "mean_edges": float(np.mean([r[3] for r in rs])),
        }
    by_in_degree = {}
    for d in sorted({r[4] for r in rows}):
        rs = [r for r in rows if r[4] == d]
        by_in_degree[str(d)] = {
            "graphs": len(rs),
            "mean_true_edge_recovery": float(np.mean([r[5] for r in rs])),
            "mean_true_non_edge_recovery": float(np.mean([r[6] for r in rs])),
        }
    summary = {"runs_per_density": runs, "N": N, "n": n, "by_density": by_density, "by_max_in_degree": by_in_degree}
    columns = ["density", "graph", "seed", "edges", "max_in_degree", "true_edge_recovery",
               "true_non_edge_recovery", "balanced_recovery"]
    return ExperimentResult("test3", columns, rows, summary)


def run_experiment(name: str, config: Optional[RunConfig] = None, quick: bool = False,
                   runs: Optional[int] = None) -> ExperimentResult:
    config = config or RunConfig()
    if name not in FULL_RUNS:
        raise ValueError(f"unknown experiment {name!r}")
    runs = runs or (QUICK_RUNS if quick else FULL_RUNS)[name]
    return {"test1": test1, "test2": test2, "test3": test3}[name](config, runs)
