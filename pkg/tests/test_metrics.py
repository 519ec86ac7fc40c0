import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unseen_prune import data, experiments, metrics, scoring
from unseen_prune.errors import DataError, InvalidArgument
from unseen_prune.model import ModelParams, TrainConfig
from unseen_prune.scoring import ScoreTable


def _table(scores, scorer="entropy", c=10, normalized=False):
    s = np.asarray(scores, dtype=np.float64)
    return ScoreTable(s, np.ones(s.size, dtype=np.int64), "fitting", scorer, c, normalized=normalized)


class TestRanks:
    def test_examples(self):
        assert metrics.ranks([0.9, 0.1, 0.5]).tolist() == [1, 3, 2]
        assert metrics.ranks(np.zeros(5)).tolist() == [1, 2, 3, 4, 5]

    def test_normalized_same_ranks(self, rng):
        t = _table(rng.random(100))
        np.testing.assert_array_equal(metrics.ranks(t), metrics.ranks(scoring.normalize(t)))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 5), min_size=1, max_size=100))
    def test_is_permutation(self, values):
        r = metrics.ranks(np.asarray(values, dtype=float))
        assert sorted(r.tolist()) == list(range(1, len(values) + 1))


class TestRankPcc:
    def test_identical_and_reversed(self):
        a = np.arange(1, 11)
        assert metrics.rank_pcc(a, a) == 1.0
        assert metrics.rank_pcc(a, a[::-1]) == -1.0

    def test_fixed_permutations(self):
        a = np.arange(1, 11)
        b = np.array([2, 1, 4, 3, 6, 5, 8, 7, 10, 9])
        # every |d| = 1: 1 - 6 * 10 / (10 * 99)
        assert metrics.rank_pcc(a, b) == pytest.approx(1 - 60 / 990, abs=1e-15)
        c = np.array([3, 7, 1, 10, 2, 9, 4, 8, 6, 5])
        d2 = np.sum((a - c) ** 2)
        assert metrics.rank_pcc(a, c) == pytest.approx(1 - 6 * d2 / 990, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(n=st.integers(2, 200), seed=st.integers(0, 2**32 - 1))
    def test_spearman_identity(self, n, seed):
        g = np.random.default_rng(seed)
        a, b = g.permutation(n) + 1, g.permutation(n) + 1
        expected = 1 - 6 * np.sum((a - b) ** 2) / (n * (n * n - 1))
        assert metrics.rank_pcc(a, b) == pytest.approx(expected, abs=1e-12)
        assert metrics.rank_pcc(a, b) == metrics.rank_pcc(b, a)
        perm = g.permutation(n)
        assert metrics.rank_pcc(a[perm], b[perm]) == pytest.approx(metrics.rank_pcc(a, b), abs=1e-12)

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            metrics.rank_pcc([1, 2], [1, 2, 3])
        with pytest.raises(InvalidArgument):
            metrics.rank_pcc([1], [1])
        with pytest.raises(DataError):
            metrics.rank_pcc([1, 1], [1, 2])


class TestDispersion:
    def test_all_zero(self):
        assert metrics.dispersion(_table(np.zeros(5))) == 1.0

    def test_uniform_predictions(self):
        assert metrics.dispersion(_table(np.full(5, math.log(10)))) == 0.0

    def test_counting(self):
        t = _table([0.0, 0.02, 0.023, 0.5, 2.0, 0.01])
        # threshold 0.01 * ln 10 = 0.0230...
        assert metrics.dispersion(t) == pytest.approx(4 / 6)
        assert metrics.dispersion(t, 0.5) == pytest.approx(5 / 6)

    def test_loss_uses_observed_max(self):
        t = _table([0.0, 0.5, 10.0, 0.09], scorer="loss")
        assert metrics.dispersion(t) == pytest.approx(0.5)

    def test_explicit_max(self):
        assert metrics.dispersion([0.1, 0.2, 0.3], 0.5, max_value=0.5) == pytest.approx(2 / 3)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
    def test_invalid_threshold(self, frac):
        with pytest.raises(InvalidArgument):
            metrics.dispersion(_table([0.1]), frac)


class TestEvaluate:
    def test_full_separable(self, two_blobs):
        cfg = TrainConfig(architecture="softmax", epochs=50, seed=0)
        test = data.generate_synthetic(data.SyntheticSpec(
            centers=[[-1.0, 0.0], [1.0, 0.0]], spreads=0.1, samples_per_class=100, seed=99))[0]
        rep = metrics.evaluate(np.arange(len(two_blobs)), two_blobs, test, cfg)
        assert rep.test_accuracy >= 0.99
        assert rep.config_digest == metrics.config_digest(cfg) and rep.seed == 0

    def test_absent_class(self):
        params = ModelParams("softmax", (np.zeros((1, 3)), np.zeros(3)))
        with pytest.raises(DataError, match="absent"):
            metrics.evaluate_params(params, [[0.0], [1.0]], [0, 1], 3)

    def test_constant_prediction(self):
        params = ModelParams("softmax", (np.zeros((1, 3)), np.array([5.0, 0.0, 0.0])))
        y = np.array([0, 0, 0, 1, 2, 2])
        rep = metrics.evaluate_params(params, np.zeros((6, 1)), y, 3)
        assert rep.test_accuracy == pytest.approx(0.5)
        np.testing.assert_array_equal(rep.per_class_accuracy, [1.0, 0.0, 0.0])
        assert rep.inter_class_variance == pytest.approx(np.var([1.0, 0.0, 0.0]))

    def test_accuracy_is_weighted_class_mean(self, small_mixture):
        cfg = TrainConfig(architecture="softmax", epochs=5, seed=2)
        rep = metrics.evaluate(np.arange(0, len(small_mixture), 2), small_mixture, small_mixture, cfg)
        weighted = np.sum(rep.per_class_accuracy * rep.class_counts) / rep.class_counts.sum()
        assert rep.test_accuracy == pytest.approx(weighted, abs=1e-12)
        assert rep.inter_class_variance == pytest.approx(np.var(rep.per_class_accuracy), abs=0)
        json.dumps(rep.to_json())

    def test_empty_coreset(self, small_mixture):
        with pytest.raises(InvalidArgument):
            metrics.evaluate([], small_mixture, small_mixture, TrainConfig())

    def test_mismatched_sets(self, small_mixture, two_blobs):
        with pytest.raises(DataError):
            metrics.evaluate([0, 1], small_mixture, two_blobs, TrainConfig())


class TestRankChange:
    def test_identical(self):
        out = metrics.rank_change_by_class([1, 2, 3], [1, 2, 3], [0, 1, 0])
        assert np.all(out["differences"] == 0)

    def test_hand_built(self):
        fitting = [1, 2, 3, 4, 5, 6]
        unseen = [4, 1, 6, 2, 5, 3]
        labels = [0, 0, 0, 1, 1, 1]
        out = metrics.rank_change_by_class(fitting, unseen, labels, class_accuracies=[0.9, 0.4])
        assert out["differences"].tolist() == [3, -1, 3, -2, 0, -3]
        assert out["per_class"][0] == {"count": 3, "mean": 5 / 3, "median": 3.0,
                                       "fraction_negative": pytest.approx(1 / 3)}
        assert out["per_class"][1]["mean"] == pytest.approx(-5 / 3)
        assert out["per_class"][1]["fraction_negative"] == pytest.approx(2 / 3)
        assert out["hardest_class"] == 1 and out["easiest_class"] == 0

    def test_misaligned(self):
        with pytest.raises(InvalidArgument):
            metrics.rank_change_by_class([1, 2], [1, 2], [0])


class TestExports:
    def test_histogram_csv(self, tmp_path):
        rows = metrics.histogram([0.0, 0.1, 0.9, 1.0], bins=2, range_=(0.0, 1.0))
        assert rows == [(0.0, 0.5, 2), (0.5, 1.0, 2)]
        path = tmp_path / "h.csv"
        metrics.save_histogram(rows, path)
        assert path.read_text().splitlines() == ["bin_left,bin_right,count", "0.0,0.5,2", "0.5,1.0,2"]

    def test_variance_series(self, tmp_path):
        path = tmp_path / "v.csv"
        metrics.save_variance_series([(0.5, 0.01, "unseen")], path)
        assert path.read_text().splitlines()[1] == "0.5,0.01,unseen"


@pytest.mark.slow
def test_rank_change_direction():
    # hardest class (lowest full-data test accuracy) moves up more under unseen scoring
    out = experiments.rank_change_experiment(seeds=5)["summary"]
    assert out["hardest_mean"] < out["easiest_mean"]
