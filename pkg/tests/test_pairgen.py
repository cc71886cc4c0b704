import math

import numpy as np
import pytest

from relmin.errors import DataError, UsageError
from relmin.pairgen import (
    PointwiseSets,
    estimate_prior_from_acceptance,
    generate_pairs,
    load_pairs,
    mixture_weights,
    save_pairs,
    split_pointwise,
)


def labels_with_prior(n, pi_plus, seed=0):
    rng = np.random.default_rng(seed)
    return {i: (1 if rng.random() < pi_plus else -1) for i in range(n)}


class TestGeneratePairs:
    def test_all_positive_all_accepted(self):
        labels = {i: 1 for i in range(10)}
        pairs, stats = generate_pairs(labels, 500, seed=0)
        assert stats.accepted == stats.drawn == 500
        assert all(labels[p.first] == labels[p.second] == 1 for p in pairs)

    def test_rejection_rule(self):
        labels = labels_with_prior(200, 0.5, seed=1)
        pairs, _ = generate_pairs(labels, 2000, seed=2)
        assert not any(
            labels[p.first] == -1 and labels[p.second] == 1 for p in pairs
        )

    def test_deterministic(self):
        labels = labels_with_prior(100, 0.4)
        first, stats1 = generate_pairs(labels, 300, seed=9)
        second, stats2 = generate_pairs(labels, 300, seed=9)
        assert first == second and stats1 == stats2

    def test_acceptance_rate_closed_form(self):
        # acceptance probability is 1 - pi_plus * pi_minus
        labels = labels_with_prior(20_000, 0.5, seed=3)
        _, stats = generate_pairs(labels, 100_000, seed=4)
        assert stats.acceptance_rate == pytest.approx(0.75, abs=0.01)

    def test_all_negative_accepted(self):
        labels = {i: -1 for i in range(5)}
        pairs, stats = generate_pairs(labels, 50, seed=0)
        assert stats.accepted == stats.drawn == 50

    def test_empty_labels_error(self):
        with pytest.raises(UsageError):
            generate_pairs({}, 10, seed=0)


class TestSplitPointwise:
    def test_sizes(self):
        labels = labels_with_prior(50, 0.5)
        pairs, _ = generate_pairs(labels, 3, seed=0)
        sets = split_pointwise(pairs)
        assert len(sets.pos_set) == len(sets.neg_set) == 3

    def test_clean_pairs_stay_clean(self):
        labels = {0: 1, 1: -1}
        pairs = [p for p in generate_pairs(labels, 200, seed=1)[0]
                 if labels[p.first] == 1 and labels[p.second] == -1]
        sets = split_pointwise(pairs)
        assert all(labels[i] == 1 for i in sets.pos_set)
        assert all(labels[i] == -1 for i in sets.neg_set)

    def test_mixture_rates_match_closed_form(self):
        pi = 0.6
        labels = labels_with_prior(50_000, pi, seed=5)
        pairs, _ = generate_pairs(labels, 100_000, seed=6)
        sets = split_pointwise(pairs)
        pos_rate = np.mean([labels[i] == 1 for i in sets.pos_set])
        neg_rate = np.mean([labels[i] == 1 for i in sets.neg_set])
        w_pos, w_neg = mixture_weights(pi)
        assert pos_rate == pytest.approx(w_pos, abs=0.01)
        assert neg_rate == pytest.approx(w_neg, abs=0.01)

    def test_unequal_sets_rejected(self):
        with pytest.raises(UsageError):
            PointwiseSets(pos_set=(1, 2), neg_set=(3,), label_source="gold", pi_plus=0.5)


class TestMixtureWeights:
    def test_half(self):
        w_pos, w_neg = mixture_weights(0.5)
        assert w_pos == pytest.approx(2 / 3, abs=1e-12)
        assert w_neg == pytest.approx(1 / 3, abs=1e-12)

    def test_point_six(self):
        w_pos, w_neg = mixture_weights(0.6)
        assert w_pos == pytest.approx(0.789474, abs=1e-6)
        assert w_neg == pytest.approx(0.473684, abs=1e-6)

    def test_degenerate_limit(self):
        w_pos, w_neg = mixture_weights(1 - 1e-9)
        assert w_pos == pytest.approx(1.0, abs=1e-6)
        assert w_neg == pytest.approx(1.0, abs=1e-6)

    def test_boundary_errors(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(UsageError):
                mixture_weights(bad)


class TestPriorEstimation:
    def test_roots_for_76_percent(self):
        low, high = estimate_prior_from_acceptance(76, 100)
        assert low == pytest.approx(0.4, abs=1e-12)
        assert high == pytest.approx(0.6, abs=1e-12)

    def test_double_root(self):
        low, high = estimate_prior_from_acceptance(75, 100)
        assert low == high == pytest.approx(0.5)

    def test_no_rejections(self):
        low, high = estimate_prior_from_acceptance(10, 10)
        assert (low, high) == (0.0, 1.0)

    def test_inconsistent_fraction(self):
        with pytest.raises(DataError):
            estimate_prior_from_acceptance(50, 100)

    def test_recovers_true_prior(self):
        # exact 60/40 split so the only noise is the pair sampling itself
        labels = {i: (1 if i < 30_000 else -1) for i in range(50_000)}
        _, stats = generate_pairs(labels, 100_000, seed=8)
        low, high = estimate_prior_from_acceptance(stats.accepted, stats.drawn)
        assert low == pytest.approx(0.4, abs=0.01)
        assert high == pytest.approx(0.6, abs=0.01)

    def test_roundtrip_identity(self):
        # acceptance probability 1 - pi*pi_minus equals pi^2 + pi_minus
        for pi in (0.3, 0.4, 0.5, 0.6, 0.9):
            accept = 1 - pi * (1 - pi)
            assert accept == pytest.approx(pi**2 + (1 - pi), abs=1e-12)


class TestPairIo:
    def test_round_trip(self, tmp_path):
        labels = labels_with_prior(20, 0.5)
        pairs, _ = generate_pairs(labels, 40, seed=0)
        ids = [f"s{i}" for i in range(20)]
        path = tmp_path / "pairs.tsv"
        save_pairs(pairs, ids, path)
        loaded = load_pairs(path, {sid: i for i, sid in enumerate(ids)})
        assert loaded == pairs
