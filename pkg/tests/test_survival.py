import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from fmvma.errors import InvalidArgumentError
from fmvma.survival import (SurvivalDataset, censoring_curve, ipcw_weights,
                            kaplan_meier, left_limit)


def brute_km(times, events, t):
    """Product over event times <= t of (1 - d/n), straight from the definition."""
    s = 1.0
    for u in sorted(set(times[events == 1])):
        if u <= t:
            n_risk = np.sum(times >= u)
            d = np.sum((times == u) & (events == 1))
            s *= 1.0 - d / n_risk
    return s


class TestKaplanMeier:
    def test_no_censoring_is_empirical(self):
        km = kaplan_meier([1, 2, 3, 4], [1, 1, 1, 1])
        assert_allclose(km([1, 2, 3, 4]), [0.75, 0.5, 0.25, 0.0], atol=1e-12)

    def test_no_events_is_flat(self):
        km = kaplan_meier([1, 2, 3], [0, 0, 0])
        assert_array_equal(km([0.5, 1, 2, 3, 10]), 1.0)
        assert km.times.size == 0

    def test_mixed_hand_case(self):
        # at t=2 three of four are at risk: 1 - 1/3; at t=4 one at risk: drop to 0
        km = kaplan_meier([1, 2, 3, 4], [0, 1, 0, 1])
        assert_allclose(km.times, [2, 4])
        assert_allclose(km.surv, [2 / 3, 0.0], atol=1e-12)
        assert km(1.5) == 1.0

    def test_left_limit_before_drop(self):
        km = kaplan_meier([2, 3], [1, 0])
        assert left_limit(km, 2) == 1.0
        assert km(2) == 0.5

    def test_left_limit_before_first_time(self):
        km = kaplan_meier([1, 2, 3, 4], [1, 1, 0, 1])
        assert left_limit(km, 0.3) == 1.0
        assert left_limit(km, 1.0) == 1.0

    def test_left_limit_mixed_case(self):
        km = kaplan_meier([1, 2, 3, 4], [0, 1, 0, 1])
        assert_allclose(left_limit(km, 4), 2 / 3, atol=1e-12)

    def test_tie_event_before_censoring(self):
        # censored subject at t=2 still counts at risk for the event at t=2
        km = kaplan_meier([2, 2, 5], [1, 0, 1])
        assert_allclose(km(2), 2 / 3, atol=1e-12)

    def test_quantile_uses_generalized_inverse(self):
        km = kaplan_meier([1, 2, 3, 4], [1, 1, 1, 1])
        assert [km.quantile(q) for q in (0.25, 0.5, 0.75)] == [2.0, 3.0, 4.0]
        assert km.quantile(1.0) == np.inf

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidArgumentError):
            kaplan_meier([], [])
        with pytest.raises(InvalidArgumentError):
            kaplan_meier([1, 2], [1])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 8), st.integers(0, 1)),
                    min_size=1, max_size=25))
    def test_matches_definition(self, obs):
        times = np.array([o[0] for o in obs], dtype=float)
        events = np.array([o[1] for o in obs])
        km = kaplan_meier(times, events)
        for t in np.arange(0, 10, 0.5):
            assert_allclose(km(t), brute_km(times, events, t), atol=1e-12)
        assert np.all(np.diff(km.surv) <= 0)
        assert np.all((km.surv >= 0) & (km.surv <= 1))
        assert set(km.times) <= set(times[events == 1])


class TestIPCW:
    def test_no_censoring_gives_ones(self):
        d = SurvivalDataset([3.0, 1.0, 2.0, 2.0], [1, 1, 1, 1], np.zeros((4, 1)))
        assert_array_equal(ipcw_weights(d), 1.0)

    def test_hand_example(self):
        d = SurvivalDataset([1.0, 2, 3, 4], [1, 0, 1, 1], np.zeros((4, 1)))
        g = censoring_curve(d)
        assert_allclose(g(2.5), 2 / 3, atol=1e-12)
        assert_allclose(ipcw_weights(d), [1, 0, 1.5, 1.5], atol=1e-12)

    def test_single_observation(self):
        d = SurvivalDataset([2.0], [1], np.zeros((1, 1)))
        assert_array_equal(ipcw_weights(d), [1.0])

    def test_censored_maximum_gets_weight(self):
        d = SurvivalDataset([1.0, 2, 3], [1, 1, 0], np.zeros((3, 1)))
        assert_allclose(ipcw_weights(d), [1, 1, 1], atol=1e-12)

    def test_ties_at_maximum_share_weight(self):
        d = SurvivalDataset([1.0, 2, 3, 3], [0, 1, 1, 0], np.zeros((4, 1)))
        pi = ipcw_weights(d)
        assert pi[2] == pi[3] == pytest.approx(4 / 3, abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 6), st.integers(0, 1)),
                    min_size=1, max_size=30))
    def test_weights_finite(self, obs):
        # every censoring time below the maximum leaves the maximum at risk,
        # so the censoring curve stays positive before every used time
        y = np.array([o[0] for o in obs], dtype=float)
        delta = np.array([o[1] for o in obs])
        pi = ipcw_weights(SurvivalDataset(y, delta, np.zeros((y.size, 1))))
        assert np.all(np.isfinite(pi)) and np.all(pi >= 0)
        assert np.all(pi[delta == 1] >= 1.0)

    def test_read_only(self, small_data):
        with pytest.raises(ValueError):
            ipcw_weights(small_data)[0] = 3.0

    def test_weighted_event_mean_near_one(self):
        # without ties, reweighting the maximum makes the total exactly n
        rng = np.random.default_rng(11)
        for n in (100, 400, 1600):
            t = rng.exponential(1.0, n)
            c = rng.exponential(2.0, n)
            data = SurvivalDataset(np.minimum(t, c), (t <= c).astype(int),
                                   np.zeros((n, 1)))
            pi = ipcw_weights(data)
            assert abs(np.sum(pi * data.delta) / n - 1.0) < 0.1
            assert abs(pi.sum() / n - 1.0) < 1e-12


class TestDataset:
    def test_response_transform(self):
        d = SurvivalDataset([1.0, np.e], [1, 0], np.zeros((2, 1)))
        assert_allclose(d.response, [0, 1])
        d = SurvivalDataset([1.0, 2.0], [1, 0], np.zeros((2, 1)), "identity")
        assert_allclose(d.response, [1, 2])

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            SurvivalDataset([1.0, 2.0], [1, 2], np.zeros((2, 1)))
        with pytest.raises(InvalidArgumentError):
            SurvivalDataset([0.0, 2.0], [1, 1], np.zeros((2, 1)))
        with pytest.raises(InvalidArgumentError):
            SurvivalDataset([1.0, 2.0], [1, 1], np.zeros((3, 1)))

    def test_immutable(self, small_data):
        with pytest.raises(ValueError):
            small_data.x[0, 0] = 1.0
