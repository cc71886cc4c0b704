import numpy as np
import pytest

from relmin.errors import TrainingError, UsageError
from relmin.riskmin.head import (
    Adam,
    LinearHead,
    batch_backward,
    batch_forward_infer,
    batch_forward_train,
    dropout_mask,
    forward,
)
from relmin.riskmin.losses import EstimatorConfig, batch_objective


def make_head(dim=4, rng=None, dropout=0.0):
    head = LinearHead.create(dim, dropout_rate=dropout)
    if rng is not None:
        head.w = rng.normal(size=dim)
        head.b = float(rng.normal())
        head.bn_gamma = rng.uniform(0.5, 1.5, size=dim)
        head.bn_beta = rng.normal(size=dim) * 0.1
    return head


class TestForward:
    def test_zero_head_scores_zero(self):
        head = make_head()
        X = np.random.default_rng(0).normal(size=(8, 4))
        scores, _ = batch_forward_train(head, X)
        np.testing.assert_array_equal(scores, np.zeros(8))

    def test_identity_normalization_is_dot_product(self):
        head = make_head(rng=np.random.default_rng(1))
        head.bn_gamma = np.ones(4)
        head.bn_beta = np.zeros(4)
        head.bn_mean = np.zeros(4)
        head.bn_var = np.ones(4)
        head.steps = 1
        x = np.array([0.3, -1.2, 0.5, 2.0])
        got = forward(head, x, mode="infer")
        assert got == pytest.approx(float(head.w @ x + head.b), abs=1e-4)

    def test_train_mode_reproducible(self):
        head = make_head(rng=np.random.default_rng(2), dropout=0.3)
        x = np.arange(4.0)
        a = forward(head, x, mode="train", rng=np.random.default_rng(7))
        b = forward(head, x, mode="train", rng=np.random.default_rng(7))
        assert a == b

    def test_infer_before_training_errors(self):
        head = make_head()
        with pytest.raises(TrainingError):
            forward(head, np.zeros(4), mode="infer")

    def test_infer_ignores_rng(self):
        head = make_head(rng=np.random.default_rng(3), dropout=0.5)
        head.steps = 1
        x = np.ones(4)
        a = forward(head, x, mode="infer", rng=np.random.default_rng(1))
        b = forward(head, x, mode="infer", rng=np.random.default_rng(999))
        assert a == b

    def test_bad_mode(self):
        with pytest.raises(UsageError):
            forward(make_head(), np.zeros(4), mode="maybe")


class TestRunningStats:
    def test_warm_start_then_ema(self):
        head = make_head(dim=2)
        X1 = np.array([[1.0, 2.0], [3.0, 4.0]])
        batch_forward_train(head, X1)
        np.testing.assert_allclose(head.bn_mean, [2.0, 3.0])
        X2 = np.array([[0.0, 0.0], [0.0, 0.0]])
        batch_forward_train(head, X2)
        np.testing.assert_allclose(head.bn_mean, 0.9 * np.array([2.0, 3.0]))
        assert head.steps == 2

    def test_update_can_be_disabled(self):
        head = make_head(dim=2)
        batch_forward_train(head, np.ones((3, 2)), update_stats=False)
        assert head.steps == 0


class TestDropout:
    def test_mask_scaling(self):
        rng = np.random.default_rng(0)
        mask = dropout_mask((2000, 5), 0.3, rng)
        kept = mask > 0
        assert abs(kept.mean() - 0.7) < 0.03
        np.testing.assert_allclose(mask[kept], 1.0 / 0.7)

    def test_rate_zero_identity(self):
        mask = dropout_mask((4, 4), 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(mask, np.ones((4, 4)))


class TestParameterGradients:
    """Full-head gradient check: estimator risk -> (w, b, gamma, beta)."""

    def risk_fn(self, cfg, head, X, n_pos, teacher=None, lam=0.0, weights=(1.0, 1.0)):
        scores, _ = batch_forward_train(head, X, update_stats=False)
        return batch_objective(
            cfg, scores[:n_pos], scores[n_pos:],
            weights=weights, teacher_scores=teacher, lam=lam,
        )[0]

    @pytest.mark.parametrize("method", [
        "binary_biased", "uu", "pcomp_unbiased", "pcomp_relu",
        "pcomp_abs", "noisy_unbiased", "rank_pruning", "pcomp_teacher",
    ])
    def test_analytic_matches_finite_difference(self, method):
        rng = np.random.default_rng(13)
        cfg = EstimatorConfig(method=method, pi_plus=0.4, uu_thetas=(0.7, 0.2))
        dim, n_pos = 5, 7
        head = make_head(dim=dim, rng=rng)
        X = rng.normal(size=(2 * n_pos, dim))
        weights = (1.3, 1.15) if method in ("rank_pruning", "pcomp_teacher") else (1.0, 1.0)
        teacher = (rng.normal(size=n_pos), rng.normal(size=n_pos)) if method == "pcomp_teacher" else None
        lam = 0.6 if method == "pcomp_teacher" else 0.0

        scores, cache = batch_forward_train(head, X, update_stats=False)
        _, dpos, dneg = batch_objective(
            cfg, scores[:n_pos], scores[n_pos:],
            weights=weights, teacher_scores=teacher, lam=lam,
        )
        grads = batch_backward(cache, np.concatenate([dpos, dneg]))

        eps = 1e-5
        for name, vec, analytic in (
            ("w", head.w, grads.w),
            ("gamma", head.bn_gamma, grads.gamma),
            ("beta", head.bn_beta, grads.beta),
        ):
            for i in range(dim):
                orig = vec[i]
                vec[i] = orig + eps
                up = self.risk_fn(cfg, head, X, n_pos, teacher, lam, weights)
                vec[i] = orig - eps
                down = self.risk_fn(cfg, head, X, n_pos, teacher, lam, weights)
                vec[i] = orig
                numeric = (up - down) / (2 * eps)
                denom = max(abs(numeric), abs(analytic[i]), 1e-8)
                assert abs(numeric - analytic[i]) / denom < 1e-4, (method, name, i)
        orig = head.b
        head.b = orig + eps
        up = self.risk_fn(cfg, head, X, n_pos, teacher, lam, weights)
        head.b = orig - eps
        down = self.risk_fn(cfg, head, X, n_pos, teacher, lam, weights)
        head.b = orig
        numeric = (up - down) / (2 * eps)
        denom = max(abs(numeric), abs(grads.b), 1e-8)
        assert abs(numeric - grads.b) / denom < 1e-4, (method, "b")


class TestAdam:
    def test_moves_toward_minimum(self):
        # minimize (w - 3)^2 through the optimizer plumbing
        head = LinearHead.create(1, dropout_rate=0.0)
        opt = Adam(lr=0.1)
        from relmin.riskmin.head import Grads

        for _ in range(500):
            g = 2 * (head.w - 3.0)
            opt.step(head, Grads(w=g, b=0.0, gamma=np.zeros(1), beta=np.zeros(1)))
        assert head.w[0] == pytest.approx(3.0, abs=1e-2)

    def test_deterministic(self):
        def run():
            head = LinearHead.create(2, dropout_rate=0.0)
            opt = Adam()
            rng = np.random.default_rng(5)
            from relmin.riskmin.head import Grads

            for _ in range(50):
                g = rng.normal(size=2)
                opt.step(head, Grads(w=g, b=float(g.sum()), gamma=g * 0.5, beta=g * 0.1))
            return head.w.copy(), head.b

        w1, b1 = run()
        w2, b2 = run()
        np.testing.assert_array_equal(w1, w2)
        assert b1 == b2
