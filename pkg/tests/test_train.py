import json

import numpy as np
import pytest

from relmin.errors import TrainingError, UsageError
from relmin.pairgen import PointwiseSets, generate_pairs, split_pointwise
from relmin.riskmin import (
    EstimatorConfig,
    TrainConfig,
    load_head,
    predict,
    rank_prune,
    save_head,
    train,
)
from relmin.riskmin.train import _prune_arrays
from conftest import gaussian_instances

FAST = TrainConfig(epochs=8, batch_size=64)


def make_problem(n=400, n_pairs=600, pi=0.5, seed=0, separation=3.0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < pi, 1, -1)
    X = rng.normal(size=(n, 2)) + separation * y[:, None] / 2
    labels = {i: int(v) for i, v in enumerate(y)}
    pairs, _ = generate_pairs(labels, n_pairs, seed=seed + 1)
    sets = split_pointwise(pairs, "gold", pi)
    features = {i: X[i] for i in range(n)}
    return X, y, sets, features


class TestTrainLoop:
    def test_learns_separable_data(self):
        X, y, sets, features = make_problem(seed=3)
        cfg = EstimatorConfig(method="pcomp_unbiased", pi_plus=0.5, seed=3)
        trained = train(sets, features, cfg, FAST)
        preds = predict(trained, list(X))
        accuracy = np.mean(np.asarray(preds) == y)
        assert accuracy > 0.9

    def test_bitwise_deterministic_log(self):
        _, _, sets, features = make_problem(seed=4)
        cfg = EstimatorConfig(method="pcomp_abs", pi_plus=0.4, seed=11)
        log1 = train(sets, features, cfg, FAST).log
        log2 = train(sets, features, cfg, FAST).log
        assert json.dumps(log1) == json.dumps(log2)

    def test_zero_features_keep_zero_weights(self):
        _, _, sets, _ = make_problem(seed=5)
        features = {i: np.zeros(3) for i in range(400)}
        cfg = EstimatorConfig(method="pcomp_unbiased", pi_plus=0.5, seed=0)
        trained = train(sets, features, cfg, FAST)
        np.testing.assert_allclose(trained.head.w, 0.0, atol=1e-12)

    def test_missing_features_error(self):
        _, _, sets, features = make_problem(seed=6)
        features.pop(sets.pos_set[0])
        cfg = EstimatorConfig(method="pcomp_unbiased", seed=0)
        with pytest.raises(UsageError, match="features missing"):
            train(sets, features, cfg, FAST)

    def test_uu_requires_distinct_thetas(self):
        with pytest.raises(UsageError):
            EstimatorConfig(method="uu", uu_thetas=(0.4, 0.4))

    def test_uu_trains_with_default_thetas(self):
        X, y, sets, features = make_problem(seed=7)
        cfg = EstimatorConfig(method="uu", pi_plus=0.5, seed=7)
        trained = train(sets, features, cfg, FAST)
        preds = predict(trained, list(X))
        assert np.mean(np.asarray(preds) == y) > 0.85

    def test_dev_criterion_recorded(self):
        _, _, sets, features = make_problem(seed=8)
        cfg = EstimatorConfig(method="pcomp_unbiased", seed=8)
        trained = train(sets, features, cfg, FAST)
        assert len(trained.log) == FAST.epochs
        assert {"epoch", "train_risk", "dev_criterion"} <= set(trained.log[0])
        assert 1 <= trained.selected_epoch <= FAST.epochs

    def test_teacher_smoke(self):
        X, y, sets, features = make_problem(seed=9)
        cfg = EstimatorConfig(method="pcomp_teacher", pi_plus=0.5, seed=9)
        trained = train(sets, features, cfg, FAST)
        assert trained.weights is not None
        preds = predict(trained, list(X))
        assert np.mean(np.asarray(preds) == y) > 0.8


class TestRankPrune:
    def test_clean_sets_prune_nothing(self):
        # synthetic rates of zero: nothing removed, unit weights
        prob_pos = np.linspace(0.6, 0.9, 10)
        prob_neg = np.linspace(0.1, 0.4, 10)
        keep_pos, keep_neg, rates = _prune_arrays(
            prob_pos, prob_neg, "estimate", pi_plus=0.5
        )
        # estimate mode: no pos prob <= mean(neg), none of neg >= mean(pos)
        assert len(keep_pos) == 10 and len(keep_neg) == 10
        assert rates.eta_pos == 0.0 and rates.eta_neg == 0.0

    def test_theory_mode_floor_counts(self):
        # pi=0.6: eta_pos = 0.2105 over 10 members -> exactly 2 pruned,
        # eta_neg = 0.4737 -> exactly 4 pruned
        prob_pos = np.linspace(0, 1, 10)
        prob_neg = np.linspace(0, 1, 10)
        keep_pos, keep_neg, rates = _prune_arrays(
            prob_pos, prob_neg, "theory", pi_plus=0.6
        )
        assert rates.eta_pos == pytest.approx(0.210526, abs=1e-6)
        assert len(keep_pos) == 8
        assert len(keep_neg) == 6

    def test_prunes_lowest_and_highest(self):
        prob_pos = np.array([0.9, 0.1, 0.8, 0.2, 0.85])
        prob_neg = np.array([0.1, 0.95, 0.2, 0.9, 0.15])
        keep_pos, keep_neg, _ = _prune_arrays(prob_pos, prob_neg, "theory", 0.5)
        # eta = 1/3 -> floor(5/3) = 1 removed from each side
        assert 1 not in keep_pos  # lowest-probability positive dropped
        assert 1 not in keep_neg  # highest-probability negative dropped

    def test_estimated_rates_on_separable_data(self):
        X, y, sets, features = make_problem(n=600, n_pairs=1500, seed=10, separation=5.0)
        cfg = EstimatorConfig(method="rank_pruning", pi_plus=0.5, rates_mode="estimate", seed=10)
        result = rank_prune(sets, features, "estimate", cfg, FAST)
        assert result.rates.eta_pos == pytest.approx(1 / 3, abs=0.05)
        assert result.rates.eta_neg == pytest.approx(1 / 3, abs=0.05)
        assert result.weights[0] == pytest.approx(1 / (1 - result.rates.eta_pos))

    def test_pruning_improves_set_purity(self):
        X, y, sets, features = make_problem(n=600, n_pairs=1500, seed=12, separation=5.0)
        cfg = EstimatorConfig(method="rank_pruning", pi_plus=0.5, rates_mode="theory", seed=12)
        result = rank_prune(sets, features, "theory", cfg, FAST)
        before = np.mean([y[i] == 1 for i in sets.pos_set])
        after = np.mean([y[i] == 1 for i in result.pos_set])
        assert after > before

    def test_degenerate_probabilities_abort(self):
        # every noisy-positive scores below the negative mean: the
        # estimated contamination saturates and training must abort
        prob_neg = np.array([0.5, 0.6])
        with pytest.raises(TrainingError, match="noise rates"):
            _prune_arrays(np.array([0.1]), prob_neg, "estimate", 0.5)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        X, y, sets, features = make_problem(seed=13)
        cfg = EstimatorConfig(method="pcomp_relu", pi_plus=0.6, seed=13)
        trained = train(sets, features, cfg, FAST)
        save_head(trained, tmp_path / "head")
        loaded = load_head(tmp_path / "head")
        assert loaded.estimator.method == "pcomp_relu"
        assert loaded.selected_epoch == trained.selected_epoch
        # float32 round trip: predictions must agree
        assert predict(loaded, list(X[:50])) == predict(trained, list(X[:50]))

    def test_log_written(self, tmp_path):
        _, _, sets, features = make_problem(seed=14)
        cfg = EstimatorConfig(method="binary_biased", seed=14)
        trained = train(sets, features, cfg, FAST)
        save_head(trained, tmp_path / "head")
        lines = (tmp_path / "head.log").read_text().splitlines()
        assert len(lines) == FAST.epochs
        assert json.loads(lines[0])["epoch"] == 1
