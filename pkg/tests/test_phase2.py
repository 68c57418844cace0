import numpy as np
import pytest

from helpers import chain, fp_example_graph, jittered_source
from lccd.config import RunConfig
from lccd.graphs import UndirectedGraph, d_separated
from lccd.mixprod import best_permutation
from lccd.oracle import oracle_d_separated
from lccd.orient import true_skeleton_state
from lccd.phase1 import SkeletonState, run_phase1
from lccd.phase2 import (
    KEPT,
    REMOVED,
    UNRESOLVED,
    VertexExhaustion,
    _guard,
    build_instance,
    conditional_mutual_information,
    recover_block_given_class,
    run_phase2,
    within_class_separator,
)

CFG = RunConfig(em_restarts=2)


def test_guard_arithmetic():
    # k=2 needs 2^a + 2^b >= 6 - min(2, 2^|T|) = 4
    assert _guard(2, 3, 0, 0)
    assert _guard(2, 3, 1, 0)
    assert not _guard(2, 3, 1, 1)


def test_chain_instance_uses_single_vertex_blocks():
    g1 = chain(12).skeleton()
    inst = build_instance(g1, 0, 1, 2)
    assert inst.T == (0, 1, 2)
    assert len(inst.X1) == 1 and len(inst.X2) == 1
    reach_t = g1.neighborhood(set(inst.T), 2)
    for X in (inst.X1, inst.X2):
        assert not set(X) & reach_t
    assert not set(inst.Z) & set(inst.T)
    assert set(inst.Z) == (g1.neighborhood(set(inst.X1), 2) | g1.neighborhood(set(inst.X2), 2)) - set(
        inst.X1 + inst.X2)


def test_small_graph_exhausts_vertices():
    with pytest.raises(VertexExhaustion):
        build_instance(chain(4).skeleton(), 0, 1, 2)


def test_zero_edges_is_a_no_op():
    state = SkeletonState(UndirectedGraph(6), {})
    out = run_phase2(jittered_source(chain(6), 0), state, 2, CFG)
    assert out.g1.edges == frozenset()
    assert out.diagnostics["phase2"] == {}


def test_conditional_mutual_information():
    indep = np.einsum("a,b,c->abc", [0.3, 0.7], [0.6, 0.4], [0.5, 0.5])
    assert conditional_mutual_information(indep, 0, 1, [2]) == pytest.approx(0, abs=1e-15)
    coupled = np.zeros((2, 2))
    coupled[0, 0] = coupled[1, 1] = 0.5
    assert conditional_mutual_information(coupled, 0, 1, []) == pytest.approx(np.log(2))


def test_within_class_separator_exact():
    # per class: x0 <- x2 -> x1, so {2} separates but the empty set does not
    cols = []
    for bias in (0.2, 0.8):
        t = np.zeros((2, 2, 2))
        for a in range(2):
            for b in range(2):
                for c in range(2):
                    pc = 0.5
                    pa = bias if a == c else 1 - bias
                    pb = 0.7 if b == c else 0.3
                    t[a, b, c] = pc * pa * pb
        cols.append(t.reshape(-1, order="F"))
    table = np.stack(cols, axis=1)
    C = within_class_separator(table, 3, 2, np.array([0.5, 0.5]), CFG, 1.0, exact=True)
    assert C == (2,)


def test_recovered_block_matches_population_table():
    # on a 12-chain both X blocks would share Z coordinates; 14 leaves room for alignment
    g = chain(14)
    src = jittered_source(g, 4)
    inst = build_instance(g.skeleton(), 3, 4, 2)
    table, prior, diag = recover_block_given_class(src, inst, g.skeleton(), 2, CFG)
    direct = src.joint_with_class([inst.T]).reshape(2, -1)
    truth_prior = direct.sum(axis=1)
    truth = (direct / truth_prior[:, None]).T
    perm, _, _ = best_permutation(truth, table)
    table, prior = table[:, perm], prior[perm]
    np.testing.assert_allclose(prior, truth_prior, atol=1e-8)
    np.testing.assert_allclose(table, truth, atol=1e-8)
    assert diag["solver_calls"] == 2 ** len(inst.Z)


def test_fp_edge_removed_with_empty_separator():
    g = fp_example_graph(3, 3)
    src = jittered_source(g, 0)
    st1 = run_phase1(src, 2, RunConfig())
    assert (0, 1) in st1.g1.edges
    st2 = run_phase2(src, st1, 2, CFG)
    entry = st2.diagnostics["phase2"]["0-1"]
    assert entry["status"] == REMOVED and entry["sepset"] == []
    assert oracle_d_separated(g, {0}, {1}, set())
    assert st2.g1 == g.skeleton()


def test_true_edges_are_never_removed():
    g = fp_example_graph(4, 4)
    src = jittered_source(g, 1)
    st2 = run_phase2(src, true_skeleton_state(g), 2, CFG)
    assert st2.g1 == g.skeleton()
    statuses = {e["status"] for e in st2.diagnostics["phase2"].values()}
    assert statuses <= {KEPT, UNRESOLVED}
    for i, j in g.skeleton().edges:
        assert not d_separated(g, {i}, {j}, set(range(g.n)) - {i, j})
