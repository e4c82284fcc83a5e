import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from viewsim.core import CampaignState, RewardParams, reward, safe_logit, sigmoid
from viewsim.envmodel import (REFERENCE_ALPHA_MEAN_POSITIVE, REFERENCE_ALPHA_MEDIAN, ControlObservation,
                              EnvModelParams, GreedyPolicy, InsufficientDataError, alpha_mean_positive,
                              alpha_median, alpha_samples, greedy_threshold, predict_next_viewability,
                              threshold_grid)

# sigma(logit(0.5) + alpha * (logit(0.7) - logit(0.5))) at 40 digits
PRED_ALPHA_0204 = 0.54310492488956724060
PRED_ALPHA_108 = 0.71403890697362171412

inner = st.floats(0.01, 0.99)


def closed_form(v, phi, goal, alpha):
    return sigmoid(safe_logit(phi) + (safe_logit(goal) - safe_logit(v)) / alpha)


def simulate(alpha, n, rng, noise=0.0):
    v = rng.uniform(0.2, 0.8, n)
    phi = rng.uniform(0.05, 0.95, n)
    phi2 = rng.uniform(0.05, 0.95, n)
    dl = safe_logit(phi2) - safe_logit(phi)
    step = alpha * dl * (1.0 + noise * rng.standard_normal(n))
    v2 = sigmoid(safe_logit(v) + step)
    return [ControlObservation(*t) for t in zip(v, phi, v2, phi2)]


class TestConstants:
    def test_reference_values(self):
        assert REFERENCE_ALPHA_MEDIAN == 0.204
        assert REFERENCE_ALPHA_MEAN_POSITIVE == 1.08


class TestPredict:
    def test_unchanged_threshold_is_identity(self):
        assert predict_next_viewability(0.37, 0.4, 0.4, EnvModelParams(0.9)) == 0.37

    def test_examples(self):
        assert predict_next_viewability(0.5, 0.5, 0.7, EnvModelParams(0.204)) == pytest.approx(PRED_ALPHA_0204, abs=1e-12)
        assert predict_next_viewability(0.5, 0.5, 0.7, EnvModelParams(1.08)) == pytest.approx(PRED_ALPHA_108, abs=1e-12)
        # six-decimal figures quoted for the same cases
        assert predict_next_viewability(0.5, 0.5, 0.7, EnvModelParams(0.204)) == pytest.approx(0.543109, abs=1e-5)
        assert predict_next_viewability(0.5, 0.5, 0.7, EnvModelParams(1.08)) == pytest.approx(0.714035, abs=1e-5)

    @pytest.mark.parametrize("alpha", [0.0, -0.1])
    def test_alpha_must_be_positive(self, alpha):
        with pytest.raises(ValueError):
            EnvModelParams(alpha)

    @given(inner, inner, inner, inner, st.floats(0.05, 3.0))
    def test_increasing_in_next_threshold(self, v, phi, a, b, alpha):
        lo, hi = sorted((a, b))
        p = EnvModelParams(alpha)
        assert predict_next_viewability(v, phi, lo, p) <= predict_next_viewability(v, phi, hi, p)


class TestAlphaEstimation:
    def test_round_trip_exact(self, rng):
        for alpha in (0.5, 0.204, 1.08):
            np.testing.assert_allclose(alpha_samples(simulate(alpha, 200, rng)), alpha, atol=1e-9)

    def test_single_record_inverse(self):
        obs = ControlObservation(0.5, 0.5, 0.543109, 0.7)
        (a,) = alpha_samples([obs])
        assert a == pytest.approx(0.204, abs=1e-4)

    def test_unchanged_thresholds_skipped(self):
        assert alpha_samples([ControlObservation(0.5, 0.3, 0.6, 0.3)] * 3) == []
        assert alpha_samples([]) == []

    def test_clamped_thresholds_count_as_unchanged(self):
        # 0 and 1e-9 clamp to the same logit
        assert alpha_samples([ControlObservation(0.5, 0.0, 0.6, 1e-9)]) == []

    def test_median_and_mean_positive(self):
        assert alpha_median([0.1, 0.2, 0.3]) == pytest.approx(0.2)
        assert alpha_mean_positive([-1.0, 2.0, 4.0]) == pytest.approx(3.0)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            alpha_median([])
        with pytest.raises(InsufficientDataError):
            alpha_mean_positive([-1.0, 0.0])

    def test_noisy_median_recovery(self):
        rng = np.random.default_rng(5)
        for alpha in (0.204, 1.08):
            est = alpha_median(alpha_samples(simulate(alpha, 1000, rng, noise=0.1)))
            assert abs(est - alpha) <= 0.1 * alpha


class TestGreedy:
    def test_closed_form_example(self):
        s = CampaignState(0.5, 0.8, 0.5)
        assert greedy_threshold(s, EnvModelParams(1.0)) == pytest.approx(0.8, abs=1e-12)

    def test_at_goal_keeps_nearest_grid_point(self):
        for phi in (0.3137, 0.5, 0.8421):
            got = greedy_threshold(CampaignState(0.6, 0.6, phi), EnvModelParams(0.7))
            assert got == pytest.approx(round(phi * 1000) / 1000, abs=1e-12)

    def test_saturates_at_lowest_candidate(self):
        got = greedy_threshold(CampaignState(0.9, 0.2, 0.99), EnvModelParams(0.204))
        assert got == threshold_grid(1001)[0]

    def test_tie_goes_to_lower_threshold(self):
        # goal 1 with v already saturated: every candidate above the clamp gives reward ~1
        g = GreedyPolicy(0.5, grid_size=11)
        s = CampaignState(1.0, 1.0, 1.0)
        got = g(s)
        grid = threshold_grid(11)
        preds = [predict_next_viewability(1.0, 1.0, c, EnvModelParams(0.5)) for c in grid]
        rewards = reward(np.array(preds), RewardParams(1.0))
        assert got == grid[int(np.argmax(rewards))]

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            threshold_grid(1)

    @given(inner, inner, inner, st.floats(0.1, 2.0))
    def test_matches_closed_form_within_one_spacing(self, v, phi, goal, alpha):
        star = closed_form(v, phi, goal, alpha)
        if not 1e-3 < star < 1 - 1e-3:
            return
        got = greedy_threshold(CampaignState(v, goal, phi), EnvModelParams(alpha))
        assert abs(got - star) <= 1e-3 + 1e-12

    @given(inner, inner, inner, st.floats(0.1, 2.0))
    def test_exhaustive_optimality_small_grid(self, v, phi, goal, alpha):
        p = EnvModelParams(alpha)
        grid = threshold_grid(21)
        got = greedy_threshold(CampaignState(v, goal, phi), p, grid_size=21)
        best = reward(predict_next_viewability(v, phi, got, p), RewardParams(goal))
        for c in grid:
            assert best >= reward(predict_next_viewability(v, phi, c, p), RewardParams(goal)) - 1e-12

    def test_policy_matches_function(self, rng):
        pol = GreedyPolicy(0.3)
        for _ in range(50):
            s = CampaignState(*rng.uniform(0.01, 0.99, 3))
            assert pol(s) == greedy_threshold(s, EnvModelParams(0.3))
