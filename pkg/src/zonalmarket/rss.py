"""Robust strategy selection.

A risk-averse producer first secures its profit in the worst case, taken
to be every opponent quoting its minimum acceptable order (half the cost
slope, intercept at cost).  Under a price-taking approximation the
worst-case-optimal orders collapse to a segment: slopes between half the
cost slope and the cost slope, with the intercept an affine function of
the slope anchored at the worst-case zonal price.  The segment always
contains the truthful order, and every point in it keeps the safety
bounds (slope >= c/2, intercept >= b) that guarantee non-negative profit
against arbitrary opponents.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq

from .clearing import (InfeasibleMarketError, MarketInstance, Strategy,
                       StrategyProfile, clear_market)
from .simplified import clear_arrays

DEGENERATE_REL_TOL = 1e-9


class RssFlag(Enum):
    """Shape of a player's worst-case-optimal strategy set."""

    SEGMENT = "active_set_nonempty"
    DEGENERATE = "degenerate_unique"
    EMPTY = "empty"


class RssDomainError(ValueError):
    """Slope outside the admissible range or wrong flag for the operation."""


class NoRootError(RuntimeError):
    """The exact worst-case stationarity equation has no admissible root."""


@dataclass(frozen=True)
class RssContext:
    """Worst-case prices and per-player strategy-set flags for one hour."""

    worst_case_prices: np.ndarray
    flags: tuple
    cost_slopes: np.ndarray
    cost_intercepts: np.ndarray
    zones: np.ndarray

    @property
    def n_players(self) -> int:
        return self.cost_slopes.shape[0]

    def price_for(self, i: int) -> float:
        return float(self.worst_case_prices[self.zones[i]])


def worst_case_price(instance: MarketInstance, tol: float = 1e-8) -> np.ndarray:
    """Zonal prices when every producer quotes its minimum acceptable order.

    Clears the full network-constrained market once at slopes c/2 and
    intercepts b.  A zone left without active producers gets NaN.
    """
    profile = StrategyProfile(0.5 * instance.cost_slopes, instance.cost_intercepts)
    result = clear_market(instance, profile, tol=tol)
    if not result.optimal:
        raise InfeasibleMarketError(result.diagnostics or "worst-case clearing infeasible")
    return result.prices


def build_context(instance: MarketInstance, tol: float = 1e-8) -> RssContext:
    """Clear the worst case once and classify every player's strategy set.

    A player whose zonal worst-case price falls below its cost intercept
    has an empty worst-case-optimal set (it cannot profitably be active);
    equality within a relative tolerance marks the degenerate single-point
    case.  A NaN zonal price (no active producer in the worst case) is
    treated as empty, directing the player to the truthful fallback.
    """
    prices = worst_case_price(instance, tol=tol)
    flags = []
    for p in instance.players:
        v = prices[p.zone]
        scale = max(1.0, abs(p.cost_intercept))
        if np.isnan(v) or v < p.cost_intercept - DEGENERATE_REL_TOL * scale:
            flags.append(RssFlag.EMPTY)
        elif abs(v - p.cost_intercept) <= DEGENERATE_REL_TOL * scale:
            flags.append(RssFlag.DEGENERATE)
        else:
            flags.append(RssFlag.SEGMENT)
    return RssContext(worst_case_prices=prices, flags=tuple(flags),
                      cost_slopes=instance.cost_slopes,
                      cost_intercepts=instance.cost_intercepts,
                      zones=instance.zones)


def intercept_for_slope(context: RssContext, i: int, slope: float) -> float:
    """Intercept paired with ``slope`` on player i's worst-case segment.

    Affine in the slope: at slope c the intercept is b (truthful order);
    at slope c/2 it is the midpoint of b and the worst-case price.
    """
    if context.flags[i] is RssFlag.EMPTY:
        raise RssDomainError(f"player {i}: worst-case set empty, use fallback_strategy")
    c = context.cost_slopes[i]
    b = context.cost_intercepts[i]
    if not 0.5 * c <= slope <= c:
        raise RssDomainError(
            f"player {i}: slope {slope} outside [{0.5 * c}, {c}]")
    v = context.price_for(i)
    # The affine map guarantees intercept >= b on the admissible range;
    # clamp away one-ulp rounding noise so callers can rely on it exactly.
    return max(float(v - (v - b) * (slope / c)), b)


def fallback_strategy(context: RssContext, i: int) -> Strategy:
    """Truthful order for a player whose worst-case set is empty."""
    if context.flags[i] is not RssFlag.EMPTY:
        raise RssDomainError(f"player {i}: fallback reserved for empty strategy sets")
    return Strategy(float(context.cost_slopes[i]), float(context.cost_intercepts[i]))


def exact_intercept_for_slope(cost_slopes, cost_intercepts, i: int,
                              slope: float, demand: float,
                              xtol: float = 1e-12) -> float:
    """Exact worst-case-optimal intercept in the single-zone market.

    Validates the price-taking approximation behind
    :func:`intercept_for_slope`: with opponents fixed at their minimum
    acceptable orders, finds the intercept making player i's profit
    stationary, without approximating the allocation sensitivity.  Root
    search runs on the interval where the player stays active.
    """
    cost_slopes = np.atleast_1d(np.asarray(cost_slopes, dtype=float))
    cost_intercepts = np.atleast_1d(np.asarray(cost_intercepts, dtype=float))
    n = cost_slopes.shape[0]
    c_i = cost_slopes[i]
    b_i = cost_intercepts[i]
    if not 0.5 * c_i <= slope <= c_i:
        raise RssDomainError(f"slope {slope} outside [{0.5 * c_i}, {c_i}]")
    slopes = 0.5 * cost_slopes
    slopes[i] = slope
    others = np.delete(np.arange(n), i)
    opp_price = clear_arrays(slopes[others], cost_intercepts[others], demand).price

    def stationarity(a_i: float) -> float:
        intercepts = cost_intercepts.copy()
        intercepts[i] = a_i
        sol = clear_arrays(slopes, intercepts, demand)
        x_i = sol.x[i]
        if x_i <= 0.0:
            return -(a_i - b_i)
        members = np.asarray(sol.active)
        inv = 1.0 / slopes[members]
        own_share = (np.sum(inv) - 1.0 / slope) / (slope * np.sum(inv))
        margin = (2.0 * slope - c_i) * x_i + a_i - b_i
        return float(-margin * own_share + x_i)

    if opp_price <= b_i:
        raise NoRootError(
            f"player {i} cannot be active: opponents clear at {opp_price} <= {b_i}")
    lo, hi = b_i, opp_price
    f_lo = stationarity(lo)
    f_hi = stationarity(hi - 1e-12 * max(1.0, abs(hi)))
    if f_lo < 0.0 or f_hi > 0.0:
        raise NoRootError(f"no admissible stationary intercept for player {i}")
    return float(brentq(stationarity, lo, hi - 1e-12 * max(1.0, abs(hi)), xtol=xtol))
