"""Shared graph builders and random instance generators for the tests."""

import itertools

import numpy as np

from lccd.graphs import Dag, random_dag
from lccd.rng import make_rng
from lccd.scm import default_equations, exact_joint, jitter
from lccd.tables import ExactSource

def fp_example_graph(l1: int, l2: int) -> Dag:
    """Two roots sharing two children, each child heading a chain.

    The roots are d-separated by the empty set, but every separator must
    avoid their common children and the chains below them.
    """
    edges = [(0, 2), (1, 2), (0, 3), (1, 3)]
    n = 4
    for head, length in ((2, l1), (3, l2)):
        prev = head
        for _ in range(length):
            edges.append((prev, n))
            prev = n
            n += 1
    return Dag(n, edges)


def chain(n: int) -> Dag:
    return Dag(n, [(v, v + 1) for v in range(n - 1)])


def all_dags(n: int):
    """Every labelled DAG on n vertices."""
    pairs = list(itertools.combinations(range(n), 2))
    seen = set()
    for orient in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), o in zip(pairs, orient):
            if o == 1:
                edges.append((a, b))
            elif o == 2:
                edges.append((b, a))
        try:
            g = Dag(n, edges)
        except ValueError:
            continue
        if g not in seen:
            seen.add(g)
            yield g


def disjoint_triples(n: int, rng, count: int, max_c: int = 3):
    """Random (S, S2, C) with |S| = |S2| = 2."""
    for _ in range(count):
        perm = rng.permutation(n)
        size_c = int(rng.integers(0, min(max_c, n - 4) + 1))
        yield tuple(perm[:2]), tuple(perm[2:4]), tuple(sorted(perm[4:4 + size_c]))


def jittered_source(g: Dag, seed, scale: float = 0.1) -> ExactSource:
    return ExactSource(exact_joint(jitter(default_equations(g), scale, seed)))


def random_instance(seed, tag: str, n_range=(5, 9), p_range=(0.15, 0.5)):
    rng = make_rng(seed, tag)
    n = int(rng.integers(*n_range))
    g = random_dag(n, float(rng.uniform(*p_range)), (tag, seed))
    return rng, g


def tv(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def plant_mixture(k: int, rng, min_tv: float = 0.1, concentration: float = 0.7):
    """Random k-component three-block mixture satisfying the identifiability condition.

    Returns ``(weights, conditionals, blocks)``; every pair of components
    differs by at least ``min_tv`` in every block.
    """
    from lccd.mixprod import allman_holds

    while True:
        sizes = [int(rng.choice([1, 2, 3])) for _ in range(3)]
        if allman_holds([2 ** s for s in sizes], k):
            break
    while True:
        conds = [rng.dirichlet(np.full(2 ** s, concentration), size=k).T for s in sizes]
        if all(tv(c[:, u], c[:, v]) >= min_tv for c in conds for u, v in itertools.combinations(range(k), 2)):
            break
    weights = rng.dirichlet(np.full(k, 3.0))
    blocks, nxt = [], 0
    for s in sizes:
        blocks.append(tuple(range(nxt, nxt + s)))
        nxt += s
    return weights, conds, blocks


def mixture_table(weights, conds) -> np.ndarray:
    return np.einsum("u,au,bu,cu->abc", weights, *conds)
