import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zonalmarket.detection import (DetectionError, ErrorPair, MarketState,
                                   NullModel, REGION_GRID, REGION_STATE,
                                   aggregate_states, classify_point, fit_null,
                                   hour_of_day_profile, normal_quantile,
                                   run_state_detection)

UNIT_NULL = NullModel(mean=0.0, std=1.0, ci_lo=-2.0, ci_hi=2.0, confidence=0.975)


class TestFitNull:
    def test_quantile_value(self):
        assert normal_quantile(0.9875) == pytest.approx(2.2414, abs=1e-4)

    def test_type_one_error_rate(self):
        rng = np.random.default_rng(0)
        sample = rng.normal(3.0, 2.0, 10000)
        null = fit_null(sample, confidence=0.975)
        rate = float(np.mean((sample < null.ci_lo) | (sample > null.ci_hi)))
        assert abs(rate - 0.025) <= 0.01

    def test_constant_series_rejected(self):
        with pytest.raises(DetectionError):
            fit_null(np.full(50, 3.0))

    def test_too_few_samples_rejected(self):
        with pytest.raises(DetectionError):
            fit_null([1.0])

    def test_zero_confidence_collapses_to_mean(self):
        null = fit_null([0.0, 1.0, 2.0, 3.0], confidence=0.0)
        assert null.ci_lo == pytest.approx(null.mean)
        assert null.ci_hi == pytest.approx(null.mean)


class TestClassifyPoint:
    def test_center_is_null_state(self):
        label = classify_point(ErrorPair(0.0, 0.0), UNIT_NULL, UNIT_NULL)
        assert label.region == 5
        assert label.state is MarketState.NULL

    def test_truthful_model_rejected_means_strategic(self):
        label = classify_point(ErrorPair(3.0, 0.0), UNIT_NULL, UNIT_NULL)
        assert label.region == 6
        assert label.state is MarketState.STRATEGIC
        label = classify_point(ErrorPair(-3.0, 0.0), UNIT_NULL, UNIT_NULL)
        assert label.region == 4
        assert label.state is MarketState.STRATEGIC

    def test_strategic_model_rejected_means_truthful(self):
        assert classify_point(ErrorPair(0.0, 3.0), UNIT_NULL, UNIT_NULL).state \
            is MarketState.TRUTHFUL
        assert classify_point(ErrorPair(0.0, -3.0), UNIT_NULL, UNIT_NULL).state \
            is MarketState.TRUTHFUL

    def test_both_underpredict_is_strategic(self):
        label = classify_point(ErrorPair(5.0, 5.0), UNIT_NULL, UNIT_NULL)
        assert label.region == 3
        assert label.state is MarketState.STRATEGIC

    def test_both_overpredict_is_expected_anomaly(self):
        label = classify_point(ErrorPair(-5.0, -5.0), UNIT_NULL, UNIT_NULL)
        assert label.region == 7
        assert label.state is MarketState.EXPECTED_ANOMALY

    def test_opposed_extremes_are_other_anomaly(self):
        assert classify_point(ErrorPair(-5.0, 5.0), UNIT_NULL, UNIT_NULL).region == 1
        assert classify_point(ErrorPair(5.0, -5.0), UNIT_NULL, UNIT_NULL).region == 9
        assert classify_point(ErrorPair(5.0, -5.0), UNIT_NULL, UNIT_NULL).state \
            is MarketState.OTHER_ANOMALY

    def test_partition_covers_all_combinations(self):
        assert set(REGION_GRID.values()) == set(range(1, 10))
        assert set(REGION_GRID.keys()) == {(i, j) for i in (-1, 0, 1)
                                           for j in (-1, 0, 1)}
        assert set(REGION_STATE.keys()) == set(range(1, 10))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(min_value=-50, max_value=50),
           st.floats(min_value=-50, max_value=50))
    def test_every_point_gets_exactly_one_region(self, e_tb, e_gt):
        label = classify_point(ErrorPair(e_tb, e_gt), UNIT_NULL, UNIT_NULL)
        assert 1 <= label.region <= 9
        assert label.state is REGION_STATE[label.region]


class TestAggregation:
    def test_all_null(self):
        assert aggregate_states([MarketState.NULL] * 5) is MarketState.NULL

    def test_other_anomaly_dominates(self):
        states = [MarketState.NULL, MarketState.STRATEGIC,
                  MarketState.OTHER_ANOMALY, MarketState.TRUTHFUL]
        assert aggregate_states(states) is MarketState.OTHER_ANOMALY

    def test_strategic_beats_truthful(self):
        assert aggregate_states([MarketState.TRUTHFUL, MarketState.STRATEGIC]) \
            is MarketState.STRATEGIC

    def test_truthful_beats_null(self):
        assert aggregate_states([MarketState.NULL, MarketState.TRUTHFUL]) \
            is MarketState.TRUTHFUL

    def test_empty_rejected(self):
        with pytest.raises(DetectionError):
            aggregate_states([])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.sampled_from(list(MarketState)), min_size=1, max_size=6),
           st.sampled_from(list(MarketState)))
    def test_adding_zone_never_lowers_severity(self, states, extra):
        base = aggregate_states(states)
        extended = aggregate_states(states + [extra])
        assert extended >= base


class TestRunStateDetection:
    def test_pure_null_mostly_null_states(self):
        rng = np.random.default_rng(5)
        T = 10000
        target = rng.normal(50.0, 5.0, (T, 2))
        tb = target - rng.normal(0.0, 2.0, (T, 2))
        gt = target - rng.normal(0.0, 2.0, (T, 2))
        series = run_state_detection(tb, gt, target, confidence=0.975)
        for z in range(2):
            tb_errors = (target - tb)[:, z]
            null = series.truthful_nulls[z]
            rate = float(np.mean((tb_errors < null.ci_lo)
                                 | (tb_errors > null.ci_hi)))
            assert abs(rate - 0.025) <= 0.01
        null_rate = float(np.mean(series.zone_states == int(MarketState.NULL)))
        assert null_rate >= 0.93

    def test_injected_strategic_hours_recovered(self):
        rng = np.random.default_rng(6)
        T = 8000
        target = rng.normal(60.0, 4.0, (T, 1))
        tb = target - rng.normal(0.0, 2.0, (T, 1))
        gt = target - rng.normal(0.0, 2.0, (T, 1))
        injected = rng.choice(T, 200, replace=False)
        tb[injected] = target[injected] - 40.0
        gt[injected] = target[injected]
        series = run_state_detection(tb, gt, target)
        assert 40.0 > 4.0 * series.truthful_nulls[0].std
        recall = float(np.mean(series.aggregate[injected]
                               == int(MarketState.STRATEGIC)))
        assert recall >= 0.9

    def test_single_zone_aggregate_equals_zone_state(self):
        rng = np.random.default_rng(7)
        target = rng.normal(50.0, 5.0, (500, 1))
        tb = target - rng.normal(0.0, 1.0, (500, 1))
        gt = target - rng.normal(0.0, 1.0, (500, 1))
        series = run_state_detection(tb, gt, target)
        assert np.array_equal(series.aggregate, series.zone_states[0])

    def test_misaligned_series_rejected(self):
        with pytest.raises(DetectionError):
            run_state_detection(np.zeros((5, 2)), np.zeros((5, 2)),
                                np.zeros((4, 2)))

    def test_shift_equivariance(self):
        rng = np.random.default_rng(8)
        target = rng.normal(50.0, 5.0, (800, 2))
        tb = target - rng.normal(0.0, 2.0, (800, 2))
        gt = target - rng.normal(0.0, 2.0, (800, 2))
        base = run_state_detection(tb, gt, target)
        shifted = run_state_detection(tb - 7.5, gt, target)
        assert np.array_equal(base.zone_states, shifted.zone_states)
        assert np.array_equal(base.regions, shifted.regions)
        for z in range(2):
            assert shifted.truthful_nulls[z].ci_lo == pytest.approx(
                base.truthful_nulls[z].ci_lo + 7.5)
            assert shifted.truthful_nulls[z].ci_hi == pytest.approx(
                base.truthful_nulls[z].ci_hi + 7.5)


class TestHourOfDayProfile:
    def test_counts_partition_hours(self):
        rng = np.random.default_rng(9)
        target = rng.normal(50.0, 5.0, (240, 2))
        tb = target - rng.normal(0.0, 2.0, (240, 2))
        gt = target - rng.normal(0.0, 2.0, (240, 2))
        series = run_state_detection(tb, gt, target)
        profile = hour_of_day_profile(series, start_hour=0)
        assert profile.shape == (3, 24, len(MarketState))
        assert profile[2].sum() == 240
        assert np.all(profile[2].sum(axis=1) == 10)

    def test_start_hour_offset(self):
        rng = np.random.default_rng(10)
        target = rng.normal(50.0, 5.0, (48, 1))
        tb = target - rng.normal(0.0, 2.0, (48, 1))
        gt = target - rng.normal(0.0, 2.0, (48, 1))
        series = run_state_detection(tb, gt, target)
        shifted = hour_of_day_profile(series, start_hour=6)
        plain = hour_of_day_profile(series, start_hour=0)
        assert np.array_equal(shifted[1], np.roll(plain[1], 6, axis=0))
