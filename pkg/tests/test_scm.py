import itertools

import numpy as np
import pytest

from helpers import chain
from lccd.graphs import Dag, d_separated, random_dag
from lccd.phase2 import conditional_mutual_information
from lccd.scm import Dataset, MixtureScm, default_equations, exact_joint, jitter, random_equations, sample


def test_default_equations_biases():
    scm = default_equations(Dag(2, [(0, 1)]), 2)
    np.testing.assert_allclose(scm.cpt[0][:, 0], [1 / 3, 2 / 3])
    # vertex 1: parents {0} plus U, (u=1, W=1)
    assert scm.cpt[1][1, 1] == pytest.approx(3 / 4)
    np.testing.assert_allclose(scm.prior, [0.5, 0.5])
    with pytest.raises(ValueError):
        default_equations(Dag(2), 1)


def test_default_equations_three_classes_stay_inside():
    scm = default_equations(random_dag(6, 0.6, 3), 3)
    for t in scm.cpt:
        assert np.all((t > 0) & (t < 1))
        assert np.all(np.diff(t, axis=0) > 0)


def test_scm_validation():
    dag = Dag(1)
    with pytest.raises(ValueError):
        MixtureScm(dag, 2, [0.3, 0.3], [[[0.5], [0.5]]])
    with pytest.raises(ValueError):
        MixtureScm(dag, 2, [0.5, 0.5], [[[0.0], [0.5]]])


def test_scm_json_round_trip():
    scm = random_equations(random_dag(5, 0.5, 2), 3, 7)
    back = MixtureScm.from_json(scm.to_json())
    assert back.dag == scm.dag
    for a, b in zip(back.cpt, scm.cpt):
        np.testing.assert_array_equal(a, b)


def test_exact_joint_single_vertex():
    t = exact_joint(default_equations(Dag(1), 2)).table
    np.testing.assert_allclose(t, [[1 / 3, 1 / 6], [1 / 6, 1 / 3]])


def test_exact_joint_is_a_distribution():
    d = exact_joint(jitter(default_equations(random_dag(7, 0.4, 1), 2), 0.1, 1))
    assert abs(d.table.sum() - 1) < 1e-10
    assert d.table.min() >= 0 and d.table.max() <= 1


def test_sample_small_and_deterministic():
    scm = default_equations(chain(4), 2)
    one = sample(scm, 1, 0)
    assert one.values.shape == (1, 4)
    a, b = sample(scm, 500, 11), sample(scm, 500, 11)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.to_csv(with_labels=True) == b.to_csv(with_labels=True)
    assert not np.array_equal(a.values, sample(scm, 500, 12).values)
    with pytest.raises(ValueError):
        sample(scm, 0, 0)


def test_sample_marginal_matches_mixture():
    scm = default_equations(Dag(2, [(0, 1)]), 2)
    N = 10**6
    data = sample(scm, N, 3)
    p = float(scm.prior @ scm.cpt[0][:, 0])
    se = np.sqrt(p * (1 - p) / N)
    assert abs(data.values[:, 0].mean() - p) < 3 * se


def test_sample_frequencies_match_exact_table():
    scm = jitter(default_equations(random_dag(4, 0.5, 4), 2), 0.05, 4)
    N = 10**6
    data = sample(scm, N, 5)
    codes = (data.values.astype(int) << np.arange(4)).sum(axis=1)
    freq = np.bincount(codes, minlength=16) / N
    exact = exact_joint(scm).marginal(range(4))
    se = np.sqrt(exact * (1 - exact) / N)
    assert np.all(np.abs(freq - exact) < 3.5 * se + 1e-12)


def test_kl_to_exact_shrinks_with_n():
    scm = default_equations(random_dag(5, 0.4, 6), 2)
    exact = exact_joint(scm).marginal(range(5))
    kls = []
    for N in (10**3, 10**4, 10**5):
        data = sample(scm, N, 8)
        codes = (data.values.astype(int) << np.arange(5)).sum(axis=1)
        freq = np.bincount(codes, minlength=32) / N
        mask = freq > 0
        kls.append(float(np.sum(freq[mask] * np.log(freq[mask] / exact[mask]))))
    assert kls[0] > kls[1] > kls[2]


def test_within_class_factorisation():
    g = random_dag(6, 0.4, 9)
    d = exact_joint(jitter(default_equations(g), 0.1, 9))
    for i, j in itertools.combinations(range(6), 2):
        rest = [v for v in range(6) if v not in (i, j)]
        for C in itertools.chain.from_iterable(itertools.combinations(rest, r) for r in range(3)):
            if not d_separated(g, {i}, {j}, C):
                continue
            for u in range(2):
                cmi = conditional_mutual_information(d.table[u] / d.table[u].sum(), i, j, C)
                assert cmi < 1e-10


def test_dataset_csv_round_trip_and_labels():
    data = sample(default_equations(chain(3), 2), 50, 1)
    text = data.to_csv(with_labels=True)
    assert text.splitlines()[0] == "v0,v1,v2,u"
    back = Dataset.from_csv(text)
    np.testing.assert_array_equal(back.values, data.values)
    np.testing.assert_array_equal(back.diagnostic_labels(), data.diagnostic_labels())
    plain = Dataset.from_csv(data.to_csv())
    assert plain.diagnostic_labels() is None


@pytest.mark.parametrize("text", ["", "a,b\n0,1\n", "v0,v1\n0,1\n1\n", "v0\n2\n", "v0\nx\n"])
def test_dataset_rejects_malformed_csv(text):
    with pytest.raises(ValueError):
        Dataset.from_csv(text)
