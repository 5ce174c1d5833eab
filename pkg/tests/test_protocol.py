import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphad.data import Dataset, Graph, random_graph
from graphad.errors import ProtocolError, UndefinedMetricError
from graphad.metrics import auc, detect_performance_flip, f1_at_contamination
from graphad.splits import VariantSplit, make_variant_splits, run_seed


def labelled_dataset(counts: dict[int, int], name="D"):
    graphs = [Graph(1, np.zeros((0, 2)), np.ones((1, 1)), c) for c, n in counts.items() for _ in range(n)]
    return Dataset(name, graphs)


def auc_pairs(scores, labels):
    """Probability that a random anomaly outscores a random normal (ties count one half)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


class TestSplits:
    def test_percentage_arithmetic(self):
        ds = labelled_dataset({0: 100, 1: 50})
        for s in make_variant_splits(ds, 0, seed=3):
            assert int((s.test_labels == 0).sum()) == 10
            assert int((s.test_labels == 1).sum()) == 5
            assert (s.train_idx.size, s.val_idx.size) == (81, 9)
            s.check(ds)

    def test_enzymes_shape(self):
        ds = labelled_dataset({c: 100 for c in range(6)})
        s = make_variant_splits(ds, 0, seed=0)[4]
        assert int((s.test_labels == 0).sum()) == 10
        assert int((s.test_labels == 1).sum()) == 50

    @given(st.integers(0, 2**32 - 1), st.integers(10, 60), st.integers(10, 60), st.integers(0, 1))
    def test_partition_oracle(self, seed, n0, n1, normal):
        ds = labelled_dataset({0: n0, 1: n1})
        splits = make_variant_splits(ds, normal, seed)
        labels = ds.labels
        for c in (0, 1):
            slices = [set(s.test_idx[labels[s.test_idx] == c].tolist()) for s in splits]
            assert set().union(*slices) == set(np.flatnonzero(labels == c).tolist())
            assert sum(len(x) for x in slices) == int((labels == c).sum())
        for s in splits:
            s.check(ds)
            pool = int((labels == normal).sum()) - int((s.test_labels == 0).sum())
            assert s.train_idx.size + s.val_idx.size == pool
            assert s.val_idx.size == max(1, round(0.1 * pool))

    def test_deterministic(self):
        ds = labelled_dataset({0: 30, 1: 30})
        a, b = make_variant_splits(ds, 1, 5), make_variant_splits(ds, 1, 5)
        for x, y in zip(a, b):
            for f in ("train_idx", "val_idx", "test_idx", "test_labels"):
                np.testing.assert_array_equal(getattr(x, f), getattr(y, f))
        c = make_variant_splits(ds, 1, 6)
        assert any(not np.array_equal(x.test_idx, y.test_idx) for x, y in zip(a, c))

    def test_small_class(self):
        with pytest.raises(ProtocolError):
            make_variant_splits(labelled_dataset({0: 30, 1: 9}), 0, 0)

    def test_absent_normal_class(self):
        with pytest.raises(ProtocolError):
            make_variant_splits(labelled_dataset({0: 30, 1: 30}), 2, 0)

    def test_assertion_layer_rejects_leak(self):
        ds = labelled_dataset({0: 20, 1: 20})
        s = make_variant_splits(ds, 0, 0)[0]
        leaked = VariantSplit(0, 0, np.append(s.train_idx, s.test_idx[0]), s.val_idx, s.test_idx, s.test_labels)
        with pytest.raises(ProtocolError):
            leaked.check(ds)
        anomalous = int(np.flatnonzero(ds.labels == 1)[0])
        wrong = VariantSplit(0, 0, np.append(s.train_idx, anomalous), s.val_idx,
                             s.test_idx[s.test_idx != anomalous], s.test_labels[s.test_idx != anomalous])
        with pytest.raises(ProtocolError):
            wrong.check(ds)

    def test_run_seed(self):
        assert run_seed(2, 3, 1) == 2031
        assert len({run_seed(0, f, r) for f in range(10) for r in range(3)}) == 30


class TestAuc:
    def test_examples(self):
        assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
        assert auc([0.3] * 4, [1, 0, 1, 0]) == 0.5

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=40))
    def test_pair_counting(self, rows):
        scores = [s / 5 for s, _ in rows]
        labels = [y for _, y in rows]
        if len(set(labels)) < 2:
            return
        assert abs(auc(scores, labels) - auc_pairs(scores, labels)) <= 1e-12

    def test_pair_counting_continuous(self, rng):
        for _ in range(50):
            scores = rng.normal(size=30)
            labels = rng.integers(0, 2, 30)
            labels[:2] = [0, 1]
            assert abs(auc(scores, labels) - auc_pairs(scores, labels)) <= 1e-12

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            f1_at_contamination([0.1, 0.2], [0, 0])

    @given(st.integers(0, 2**32 - 1))
    def test_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=20)
        y = np.r_[np.zeros(10), np.ones(10)]
        assert auc(s, y) == auc(np.exp(3 * s) + 1, y)


class TestF1:
    def test_examples(self):
        assert f1_at_contamination([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
        assert f1_at_contamination([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0

    def test_stable_tie_break(self):
        assert f1_at_contamination([0.5, 0.5, 0.5, 0.5], [1, 0, 0, 0]) == 1.0
        assert f1_at_contamination([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 0]) == 0.0

    def test_random_scores_near_contamination(self):
        rng = np.random.default_rng(0)
        labels = np.r_[np.ones(83), np.zeros(17)].astype(int)
        vals = [f1_at_contamination(rng.random(100), rng.permutation(labels)) for _ in range(1000)]
        assert np.mean(vals) == pytest.approx(0.83, abs=0.01)


class TestFlip:
    @pytest.mark.parametrize("aucs,expected", [([0.263, 0.752], True), ([0.668, 0.730], False), ([0.5, 0.5], False)])
    def test_examples(self, aucs, expected):
        assert detect_performance_flip(aucs) is expected


def test_random_graph_helper_respects_bounds(rng):
    for _ in range(20):
        g = random_graph(rng, 2, 4)
        assert 2 <= g.num_nodes <= 4
