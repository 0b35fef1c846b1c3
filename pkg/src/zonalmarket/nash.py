"""Approximate global Nash equilibria by grid search over strategy segments.

Each player's admissible orders live on its one-dimensional worst-case
segment, so a best response reduces to evaluating the full market
clearing at a handful of grid slopes and picking the most profitable.
Iterating best responses Jacobi- or Gauss-Seidel-style until the slope
vector repeats yields a profile where no player can improve by moving to
any other grid point, which an exhaustive deviation audit certifies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clearing import (ClearingResult, MarketInstance, Strategy,
                       StrategyProfile, clear_market, player_profit)
from .rss import RssContext, RssFlag, intercept_for_slope


class NashSearchError(RuntimeError):
    """No grid point could be evaluated (e.g. infeasible clearing)."""


# Profits within this absolute margin (EUR) of the best grid profit count as
# ties and resolve toward the lowest grid index.  Keeps the iteration
# deterministic on the near-flat profit plateaus the strategy segments
# produce, and matches the deviation-audit tolerance.
PROFIT_TIE_TOL = 1e-9


@dataclass(frozen=True)
class GridConfig:
    """Search parameters: grid density, cycle budget, stopping rule.

    ``tol_ne`` is the optional 2-norm tolerance on consecutive slope
    vectors; exact repetition always stops the iteration.  ``presolve``
    runs a coarser search first and warm-starts the main one.
    """

    n_pts: int = 11
    max_cycles: int = 50
    tol_ne: float = 0.0
    schedule: str = "jacobi"
    presolve: "GridConfig | None" = None

    def __post_init__(self):
        if self.n_pts < 2:
            raise ValueError("n_pts must be >= 2")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")
        if self.tol_ne < 0.0:
            raise ValueError("tol_ne must be >= 0")
        if self.schedule not in ("jacobi", "gauss_seidel"):
            raise ValueError("schedule must be 'jacobi' or 'gauss_seidel'")


@dataclass
class EquilibriumReport:
    """Outcome of the equilibrium iteration, with per-cycle trace."""

    strategies: StrategyProfile
    profits: np.ndarray
    converged: bool
    cycles_used: int
    trace: list
    clearing: ClearingResult
    stopped_by: str = "max_cycles"
    epsilon: float | None = None


@dataclass(frozen=True)
class AuditResult:
    """Exhaustive single-player deviation audit of a profile."""

    max_gain: float
    player: int
    grid_index: int
    gains: np.ndarray

    def certifies(self, tol: float = 1e-9) -> bool:
        return self.max_gain <= tol


def candidate_strategies(context: RssContext, i: int, n_pts: int):
    """Grid slopes on [c/2, c] and their segment intercepts for player i."""
    c = float(context.cost_slopes[i])
    levels = np.arange(n_pts, dtype=float)
    slopes = 0.5 * c + 0.5 * c * levels / (n_pts - 1)
    intercepts = np.array([intercept_for_slope(context, i, m) for m in slopes])
    return slopes, intercepts


def _response_profits(instance: MarketInstance, context: RssContext,
                      profile: StrategyProfile, i: int, n_pts: int):
    """Profit of player i at each of its grid strategies, opponents fixed."""
    slopes, intercepts = candidate_strategies(context, i, n_pts)
    profits = np.empty(n_pts)
    warm = None
    for l in range(n_pts):
        candidate = profile.with_strategy(i, Strategy(slopes[l], intercepts[l]))
        result = clear_market(instance, candidate, warm_start=warm)
        if not result.optimal:
            raise NashSearchError(
                f"clearing infeasible during best response of player {i}: "
                f"{result.diagnostics}")
        warm = result.solution
        profits[l] = player_profit(result, instance, candidate, i)
    return slopes, intercepts, profits


def best_response(instance: MarketInstance, context: RssContext,
                  profile: StrategyProfile, i: int, n_pts: int) -> Strategy:
    """Most profitable grid strategy of player i against a fixed profile.

    Players with an empty worst-case set fall back to their truthful
    order.  Ties are broken toward the lowest grid index, which makes the
    search deterministic.
    """
    if context.flags[i] is RssFlag.EMPTY:
        return Strategy(float(context.cost_slopes[i]),
                        float(context.cost_intercepts[i]))
    slopes, intercepts, profits = _response_profits(instance, context, profile,
                                                    i, n_pts)
    best = int(np.argmax(profits >= np.max(profits) - PROFIT_TIE_TOL))
    return Strategy(float(slopes[best]), float(intercepts[best]))


def jacobi_update(instance: MarketInstance, context: RssContext,
                  profile: StrategyProfile, n_pts: int) -> StrategyProfile:
    """Simultaneous best responses: all players react to the same profile."""
    responses = [best_response(instance, context, profile, i, n_pts)
                 for i in range(instance.n_players)]
    return StrategyProfile.from_strategies(responses)


def gauss_seidel_update(instance: MarketInstance, context: RssContext,
                        profile: StrategyProfile, n_pts: int,
                        order=None) -> StrategyProfile:
    """Sequential best responses; each player sees all earlier updates."""
    if order is None:
        order = range(instance.n_players)
    current = profile
    for i in order:
        current = current.with_strategy(
            i, best_response(instance, context, current, i, n_pts))
    return current


def initial_profile(instance: MarketInstance, context: RssContext) -> StrategyProfile:
    """Truthful endpoint: slope = cost slope, which maps to intercept = cost."""
    return StrategyProfile(instance.cost_slopes, instance.cost_intercepts)


def find_equilibrium(instance: MarketInstance, context: RssContext,
                     config: GridConfig,
                     initial: StrategyProfile | None = None) -> EquilibriumReport:
    """Iterate strategy updates until the slope vector repeats.

    Stops on exact repetition of the slope vector (the grid is finite),
    on ``tol_ne`` if positive, or after ``max_cycles``.  With a presolve
    config the search first converges on the coarse grid and warm-starts
    from there.  On a non-converged exit the report carries the deviation
    audit bound of the final profile as ``epsilon``.
    """
    if config.presolve is not None:
        coarse = find_equilibrium(instance, context,
                                  GridConfig(n_pts=config.presolve.n_pts,
                                             max_cycles=config.presolve.max_cycles,
                                             tol_ne=config.presolve.tol_ne,
                                             schedule=config.presolve.schedule),
                                  initial=initial)
        initial = coarse.strategies
    profile = initial_profile(instance, context) if initial is None else initial
    update = jacobi_update if config.schedule == "jacobi" else gauss_seidel_update
    trace = [profile]
    converged = False
    stopped_by = "max_cycles"
    cycles = 0
    for cycle in range(1, config.max_cycles + 1):
        cycles = cycle
        new_profile = update(instance, context, profile, config.n_pts)
        trace.append(new_profile)
        if np.array_equal(new_profile.slopes, profile.slopes):
            profile = new_profile
            converged = True
            stopped_by = "fixed_point"
            break
        delta = float(np.linalg.norm(new_profile.slopes - profile.slopes))
        profile = new_profile
        if config.tol_ne > 0.0 and delta < config.tol_ne:
            converged = True
            stopped_by = "tolerance"
            break
    clearing = clear_market(instance, profile)
    profits = np.array([player_profit(clearing, instance, profile, i)
                        for i in range(instance.n_players)])
    epsilon = None
    if not converged:
        epsilon = deviation_audit(instance, context, profile, config.n_pts).max_gain
    return EquilibriumReport(strategies=profile, profits=profits,
                             converged=converged, cycles_used=cycles,
                             trace=trace, clearing=clearing,
                             stopped_by=stopped_by, epsilon=epsilon)


def deviation_audit(instance: MarketInstance, context: RssContext,
                    profile: StrategyProfile, n_pts: int) -> AuditResult:
    """Best single-player grid deviation gain over the given profile.

    For every player, evaluates all grid strategies against the fixed
    profile and compares with the player's current profit.  A profile is
    an approximate global equilibrium on the grid when the maximal gain
    is (numerically) non-positive.
    """
    base = clear_market(instance, profile)
    if not base.optimal:
        raise NashSearchError(f"audit clearing infeasible: {base.diagnostics}")
    n = instance.n_players
    gains = np.full((n, n_pts), -np.inf)
    worst_gain = -np.inf
    worst = (0, 0)
    for i in range(n):
        current = player_profit(base, instance, profile, i)
        if context.flags[i] is RssFlag.EMPTY:
            gains[i, :] = 0.0
            continue
        _, _, profits = _response_profits(instance, context, profile, i, n_pts)
        gains[i] = profits - current
        best = int(np.argmax(profits))
        if gains[i, best] > worst_gain:
            worst_gain = float(gains[i, best])
            worst = (i, best)
    return AuditResult(max_gain=float(worst_gain), player=worst[0],
                       grid_index=worst[1], gains=gains)
