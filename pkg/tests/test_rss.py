import numpy as np
import pytest

from conftest import random_feasible_instance
from zonalmarket.clearing import (MarketInstance, Player, StrategyProfile,
                                  clear_market, player_profit)
from zonalmarket.rss import (NoRootError, RssDomainError, RssFlag,
                             build_context, exact_intercept_for_slope,
                             fallback_strategy, intercept_for_slope,
                             worst_case_price)


def symmetric_instance(n=4, cost_slope=2.0, cost_intercept=1.0, capacity=100.0):
    players = tuple(Player(i, 0, cost_slope, cost_intercept, capacity)
                    for i in range(n))
    return MarketInstance(players, [float(n)])


class TestWorstCasePrice:
    def test_symmetric_example(self):
        # n players with c=2, b=1, d=n: half-slope clearing gives ask 2
        prices = worst_case_price(symmetric_instance())
        assert prices == pytest.approx([2.0])

    def test_price_at_least_cheapest_intercept(self, rng):
        for _ in range(40):
            instance = random_feasible_instance(rng)
            prices = worst_case_price(instance)
            for z in range(instance.n_zones):
                if np.isnan(prices[z]):
                    continue
                intercepts = [p.cost_intercept for p in instance.players
                              if p.zone == z]
                assert prices[z] >= min(intercepts) - 1e-9

    def test_saturated_cheap_player_passes_price_setting(self):
        # cheap player capped at 1, the next player must serve the rest
        instance = MarketInstance(
            (Player(0, 0, 1.0, 0.0, 1.0), Player(1, 0, 2.0, 1.0, 10.0)),
            [3.0])
        prices = worst_case_price(instance)
        # marginal player serves 2 at slope 1: ask = 1 + 1*2 = 3
        assert prices == pytest.approx([3.0])


class TestContextFlags:
    def test_segment_flags(self):
        context = build_context(symmetric_instance())
        assert all(f is RssFlag.SEGMENT for f in context.flags)

    def test_empty_flag_for_priced_out_player(self):
        instance = MarketInstance(
            (Player(0, 0, 1.0, 0.0, 10.0), Player(1, 0, 1.0, 9.0, 10.0)),
            [1.0])
        context = build_context(instance)
        assert context.flags[0] is RssFlag.SEGMENT
        assert context.flags[1] is RssFlag.EMPTY

    def test_degenerate_flag_on_exact_equality(self):
        # single player, d such that the worst-case ask equals a synthetic
        # opponent's intercept exactly
        instance = MarketInstance(
            (Player(0, 0, 2.0, 1.0, 10.0), Player(1, 0, 1.0, 2.0, 10.0)),
            [1.0])
        context = build_context(instance)
        # worst case: slopes (1, 0.5), intercepts (1, 2); price = 1 + 1*1 = 2
        assert context.worst_case_prices[0] == pytest.approx(2.0)
        assert context.flags[1] is RssFlag.DEGENERATE


class TestInterceptForSlope:
    def test_truthful_endpoint(self):
        context = build_context(symmetric_instance())
        assert intercept_for_slope(context, 0, 2.0) == 1.0

    def test_half_slope_endpoint(self):
        context = build_context(symmetric_instance())
        assert intercept_for_slope(context, 0, 1.0) == pytest.approx(1.5)

    def test_degenerate_price_pins_intercept(self):
        instance = MarketInstance(
            (Player(0, 0, 2.0, 1.0, 10.0), Player(1, 0, 1.0, 2.0, 10.0)),
            [1.0])
        context = build_context(instance)
        for slope in np.linspace(0.5, 1.0, 7):
            assert intercept_for_slope(context, 1, slope) == pytest.approx(2.0)

    def test_domain_errors(self):
        context = build_context(symmetric_instance())
        with pytest.raises(RssDomainError):
            intercept_for_slope(context, 0, 0.5)  # below c/2
        with pytest.raises(RssDomainError):
            intercept_for_slope(context, 0, 2.5)  # above c

    def test_segment_respects_safety_bounds(self, rng):
        for _ in range(40):
            instance = random_feasible_instance(rng)
            context = build_context(instance)
            for i in range(instance.n_players):
                if context.flags[i] is RssFlag.EMPTY:
                    continue
                c = instance.players[i].cost_slope
                b = instance.players[i].cost_intercept
                v = context.price_for(i)
                for slope in (0.5 * c, 0.75 * c, c):
                    a = intercept_for_slope(context, i, slope)
                    assert slope >= 0.5 * c
                    assert a >= b
                    assert a <= 0.5 * v + 0.5 * b + 1e-12 * max(1.0, abs(v))


class TestFallback:
    def test_fallback_is_truthful(self):
        instance = MarketInstance(
            (Player(0, 0, 1.0, 0.0, 10.0), Player(1, 0, 1.0, 9.0, 10.0)),
            [1.0])
        context = build_context(instance)
        strategy = fallback_strategy(context, 1)
        assert strategy.slope == 1.0
        assert strategy.intercept == 9.0

    def test_fallback_guard(self):
        context = build_context(symmetric_instance())
        with pytest.raises(RssDomainError):
            fallback_strategy(context, 0)

    def test_fallback_profit_nonnegative(self, rng):
        instance = MarketInstance(
            (Player(0, 0, 1.0, 0.0, 10.0), Player(1, 0, 1.0, 9.0, 10.0)),
            [1.0])
        context = build_context(instance)
        fb = fallback_strategy(context, 1)
        for _ in range(30):
            profile = StrategyProfile(
                [float(rng.uniform(0.1, 3.0)), fb.slope],
                [float(rng.uniform(-2.0, 12.0)), fb.intercept])
            result = clear_market(instance, profile)
            assert player_profit(result, instance, profile, 1) >= -1e-9


class TestSegmentSafety:
    def test_profit_nonnegative_under_arbitrary_opponents(self, rng):
        # player 0 plays a segment strategy, opponents are unrestricted
        for _ in range(60):
            instance = random_feasible_instance(rng)
            context = build_context(instance)
            if context.flags[0] is RssFlag.EMPTY:
                continue
            c0 = instance.players[0].cost_slope
            slope0 = float(rng.uniform(0.5 * c0, c0))
            a0 = intercept_for_slope(context, 0, slope0)
            slopes = rng.uniform(0.1, 4.0, instance.n_players)
            intercepts = rng.uniform(-2.0, 5.0, instance.n_players)
            slopes[0] = slope0
            intercepts[0] = a0
            profile = StrategyProfile(slopes, intercepts)
            result = clear_market(instance, profile)
            assert result.optimal
            assert player_profit(result, instance, profile, 0) >= -1e-9


class TestExactCurve:
    def test_many_opponents_close_to_affine(self):
        n = 41
        cost_slopes = np.full(n, 2.0)
        cost_intercepts = np.full(n, 1.0)
        instance = MarketInstance(
            tuple(Player(i, 0, 2.0, 1.0, 1000.0) for i in range(n)),
            [float(n)])
        context = build_context(instance)
        for slope in (1.0, 1.5, 2.0):
            exact = exact_intercept_for_slope(cost_slopes, cost_intercepts,
                                              0, slope, float(n))
            affine = intercept_for_slope(context, 0, slope)
            assert abs(exact - affine) / abs(affine) <= 0.02

    def test_two_players_visible_gap(self):
        cost_slopes = np.full(2, 2.0)
        cost_intercepts = np.full(2, 1.0)
        instance = MarketInstance(
            tuple(Player(i, 0, 2.0, 1.0, 100.0) for i in range(2)), [2.0])
        context = build_context(instance)
        exact = exact_intercept_for_slope(cost_slopes, cost_intercepts,
                                          0, 1.5, 2.0)
        affine = intercept_for_slope(context, 0, 1.5)
        assert abs(exact - affine) / abs(affine) > 0.05

    def test_symmetric_under_player_relabel(self):
        n = 6
        cost_slopes = np.full(n, 3.0)
        cost_intercepts = np.full(n, 0.5)
        values = [exact_intercept_for_slope(cost_slopes, cost_intercepts,
                                            i, 2.0, 4.0) for i in range(n)]
        assert np.ptp(values) <= 1e-9

    def test_no_root_when_priced_out(self):
        cost_slopes = np.array([1.0, 1.0])
        cost_intercepts = np.array([5.0, 0.0])
        with pytest.raises(NoRootError):
            exact_intercept_for_slope(cost_slopes, cost_intercepts, 0, 1.0, 1.0)

    def test_exact_stationarity(self):
        # the returned intercept makes the profit derivative vanish
        from zonalmarket.simplified import clear_arrays
        n = 5
        cost_slopes = np.array([2.0, 1.5, 3.0, 2.5, 1.8])
        cost_intercepts = np.array([0.5, 0.8, 0.3, 0.6, 0.9])
        i, slope, demand = 0, 1.5, 4.0
        a_i = exact_intercept_for_slope(cost_slopes, cost_intercepts, i,
                                        slope, demand)
        slopes = 0.5 * cost_slopes
        slopes[i] = slope
        h = 1e-7

        def profit(ai):
            intercepts = cost_intercepts.copy()
            intercepts[i] = ai
            sol = clear_arrays(slopes, intercepts, demand)
            xi = sol.x[i]
            return (sol.price * xi - 0.5 * cost_slopes[i] * xi ** 2
                    - cost_intercepts[i] * xi)

        derivative = (profit(a_i + h) - profit(a_i - h)) / (2 * h)
        assert abs(derivative) <= 1e-6
