"""Closed-form clearing and equilibria for the single-zone unconstrained market.

With one zone, no capacity limits and no network, the clearing reduces to
splitting inflexible demand so that all active producers quote the same
marginal ask.  That admits a closed-form allocation over the active set,
a unique equilibrium in intercepts for fixed slopes, and a continuum of
local equilibria when slopes are free - the machinery behind the synthetic
experiments in this module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .clearing import (MarketInstance, StrategyProfile, clear_market,
                       MarketInputError)


class ConditioningWarning(UserWarning):
    """Emitted when the equilibrium linear system is close to singular."""


@dataclass(frozen=True)
class SimpleMarket:
    """Single-zone unconstrained market: submitted orders, true costs, demand."""

    slopes: np.ndarray
    intercepts: np.ndarray
    cost_slopes: np.ndarray
    cost_intercepts: np.ndarray
    demand: float

    def __post_init__(self):
        for name in ("slopes", "intercepts", "cost_slopes", "cost_intercepts"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        n = self.slopes.shape[0]
        for name in ("intercepts", "cost_slopes", "cost_intercepts"):
            if getattr(self, name).shape != (n,):
                raise MarketInputError(f"{name} not aligned with slopes")
        if np.any(self.slopes <= 0.0) or np.any(self.cost_slopes <= 0.0):
            raise MarketInputError("all slopes must be > 0")
        if not self.demand > 0.0:
            raise MarketInputError("demand must be > 0")

    @property
    def n_players(self) -> int:
        return self.slopes.shape[0]


@dataclass(frozen=True)
class ActiveSetSolution:
    """Closed-form clearing outcome: active players, allocation, price."""

    active: tuple
    x: np.ndarray
    price: float


@dataclass(frozen=True)
class EquilibriumCoefficients:
    """Per-player coefficients of the fixed-slope equilibrium system.

    ``k = 2 m - c``; ``own_share`` is the sensitivity -dx_i/da_i of a
    player's allocation to its own intercept; ``base_share`` the demand
    term d / (m_i sum_j 1/m_j); ``theta`` the diagonal weight of the
    equilibrium system (requires 1 - k * own_share != 0).
    """

    k: np.ndarray
    own_share: np.ndarray
    base_share: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class EquilibriumCheck:
    """Stationarity and curvature report for a candidate strategy profile."""

    stationary: bool
    trace: float
    det: float
    grad_intercept: np.ndarray
    grad_slope: np.ndarray
    traces: np.ndarray
    dets: np.ndarray
    d2_intercept: np.ndarray
    active_set_ok: bool


def _allocation(slopes: np.ndarray, intercepts: np.ndarray, demand: float,
                members: np.ndarray) -> np.ndarray:
    """Equal-marginal-ask allocation over a fixed member set (may go negative)."""
    inv = 1.0 / slopes[members]
    total_inv = float(np.sum(inv))
    price = (demand + float(intercepts[members] @ inv)) / total_inv
    return (price - intercepts[members]) / slopes[members]


def clear_simplified(market: SimpleMarket) -> ActiveSetSolution:
    """Closed-form clearing of the single-zone unconstrained market.

    Starts from all players and repeatedly removes those whose
    equal-marginal allocation is non-positive; the remaining fixed point
    is the unique optimum of the underlying QP.
    """
    n = market.n_players
    members = np.arange(n)
    for _ in range(n):
        x_members = _allocation(market.slopes, market.intercepts, market.demand, members)
        keep = x_members > 0.0
        if np.all(keep):
            break
        members = members[keep]
        if members.size == 0:
            raise MarketInputError("demand > 0 must keep at least one player active")
    x = np.zeros(n)
    x[members] = x_members
    price = float(market.slopes[members[0]] * x[members[0]] + market.intercepts[members[0]])
    return ActiveSetSolution(active=tuple(int(i) for i in members), x=x, price=price)


def clear_arrays(slopes, intercepts, demand: float) -> ActiveSetSolution:
    """Shortcut for :func:`clear_simplified` on bare arrays (costs unused)."""
    slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
    return clear_simplified(SimpleMarket(slopes, intercepts, np.ones_like(slopes),
                                         np.zeros_like(slopes), demand))


def equilibrium_coefficients(cost_slopes: np.ndarray, slopes: np.ndarray,
                             demand: float) -> EquilibriumCoefficients:
    """Coefficients of the fixed-slope equilibrium system, all players active."""
    slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
    cost_slopes = np.atleast_1d(np.asarray(cost_slopes, dtype=float))
    inv = 1.0 / slopes
    total_inv = float(np.sum(inv))
    sum_others = total_inv - inv
    own_share = sum_others / (slopes * total_inv)
    base_share = demand / (slopes * total_inv)
    k = 2.0 * slopes - cost_slopes
    denom = 1.0 - k * own_share
    if np.any(np.abs(denom) < 1e-12 * np.maximum(1.0, np.abs(k * own_share))):
        raise MarketInputError("equilibrium weights undefined: 1 - k * own_share ~ 0")
    theta = (2.0 - k * own_share) / denom
    return EquilibriumCoefficients(k=k, own_share=own_share,
                                   base_share=base_share, theta=theta)


def equilibrium_intercepts(cost_slopes, cost_intercepts, slopes, demand: float,
                           cross_check_tol: float = 1e-6) -> np.ndarray:
    """Unique equilibrium intercepts for fixed slopes, all players active.

    Solves, for every player i with S_i = sum_{j != i} 1/m_j,
        theta_i S_i a_i - sum_{j != i} a_j / m_j = d + (theta_i - 1) b_i S_i.
    The matrix is diagonal plus rank one, so the dense solve is
    cross-checked against the Sherman-Morrison closed form; disagreement
    beyond ``cross_check_tol`` (relative) raises a ConditioningWarning.
    """
    slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
    cost_slopes = np.atleast_1d(np.asarray(cost_slopes, dtype=float))
    cost_intercepts = np.atleast_1d(np.asarray(cost_intercepts, dtype=float))
    n = slopes.shape[0]
    if n < 2:
        raise MarketInputError("equilibrium system needs at least two players")
    coeff = equilibrium_coefficients(cost_slopes, slopes, demand)
    inv = 1.0 / slopes
    sum_others = float(np.sum(inv)) - inv
    rhs = demand + (coeff.theta - 1.0) * cost_intercepts * sum_others
    diag = coeff.theta * sum_others + inv

    # Dense route: A = diag(diag) - 1 inv'.
    matrix = np.diag(diag) - np.outer(np.ones(n), inv)
    dense = np.linalg.solve(matrix, rhs)

    # Sherman-Morrison route on the same diagonal-plus-rank-one structure.
    d_rhs = rhs / diag
    d_ones = 1.0 / diag
    denominator = 1.0 - float(inv @ d_ones)
    if abs(denominator) < 1e-12:
        warnings.warn("rank-one update nearly singular", ConditioningWarning)
        return dense
    shermorr = d_rhs + d_ones * (float(inv @ d_rhs) / denominator)

    scale = np.max(np.abs(dense)) + 1.0
    if np.max(np.abs(dense - shermorr)) > cross_check_tol * scale:
        warnings.warn("dense and Sherman-Morrison solutions disagree; "
                      "equilibrium system is ill-conditioned", ConditioningWarning)
    return dense


def profit_derivatives(cost_slopes, cost_intercepts, slopes, intercepts,
                       demand: float):
    """Analytic first and second profit derivatives, all players active.

    Returns (grad_a, grad_m, d2_aa, d2_ma, d2_mm, x) where the second
    derivatives follow from dx/dm = x dx/da:
        d2pi/dm da = dpi/da * dx/da + x * d2pi/da2
        d2pi/dm2   = 2 x dx/da dpi/da + x^2 d2pi/da2.
    """
    slopes = np.atleast_1d(np.asarray(slopes, dtype=float))
    intercepts = np.atleast_1d(np.asarray(intercepts, dtype=float))
    cost_slopes = np.atleast_1d(np.asarray(cost_slopes, dtype=float))
    cost_intercepts = np.atleast_1d(np.asarray(cost_intercepts, dtype=float))
    n = slopes.shape[0]
    coeff = equilibrium_coefficients(cost_slopes, slopes, demand)
    members = np.arange(n)
    x = _allocation(slopes, intercepts, demand, members)
    dx_da = -coeff.own_share
    margin = coeff.k * x + intercepts - cost_intercepts
    grad_a = margin * dx_da + x
    grad_m = x * grad_a
    d2_aa = coeff.own_share * (coeff.k * coeff.own_share - 2.0)
    d2_ma = grad_a * dx_da + x * d2_aa
    d2_mm = 2.0 * x * dx_da * grad_a + x ** 2 * d2_aa
    return grad_a, grad_m, d2_aa, d2_ma, d2_mm, x


def verify_local_equilibrium(cost_slopes, cost_intercepts, slopes, intercepts,
                             demand: float, stationarity_tol: float = 1e-7,
                             det_tol: float = 1e-6) -> EquilibriumCheck:
    """Check whether a profile is a stationary local maximum for every player.

    Evaluates the analytic profit derivatives player by player (all
    players assumed active), together with the 2x2 curvature blocks in
    (slope, intercept).  At a stationary profile every block has negative
    trace and vanishing determinant, i.e. a flat local maximum.  A profile
    under which the closed-form clearing deactivates a player is flagged
    via ``active_set_ok = False``.
    """
    grad_a, grad_m, d2_aa, d2_ma, d2_mm, x = profit_derivatives(
        cost_slopes, cost_intercepts, slopes, intercepts, demand)
    scale = max(1.0, float(np.max(np.abs(x))), abs(demand))
    stationary = bool(np.max(np.abs(grad_a)) <= stationarity_tol * scale
                      and np.max(np.abs(grad_m)) <= stationarity_tol * scale ** 2)
    traces = d2_mm + d2_aa
    dets = d2_mm * d2_aa - d2_ma ** 2
    cleared = clear_arrays(slopes, intercepts, demand)
    active_set_ok = len(cleared.active) == len(np.atleast_1d(slopes))
    worst = int(np.argmax(np.abs(dets)))
    return EquilibriumCheck(
        stationary=stationary and active_set_ok,
        trace=float(np.max(traces)),
        det=float(dets[worst]),
        grad_intercept=grad_a,
        grad_slope=grad_m,
        traces=traces,
        dets=dets,
        d2_intercept=d2_aa,
        active_set_ok=active_set_ok,
    )


@dataclass(frozen=True)
class PriceRatioResult:
    """Strategic-to-truthful price ratio samples and summary statistics."""

    ratios: np.ndarray
    truthful_prices: np.ndarray
    strategic_prices: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def fraction_above_one(self) -> float:
        return float(np.mean(self.ratios > 1.0))


def price_ratio_experiment(n_samples: int, n_players: int, demand: float,
                           cost_slope_range, cost_intercept_range,
                           seed: int) -> PriceRatioResult:
    """Sample random cost structures and compare truthful vs equilibrium prices.

    For each sample, the truthful price clears orders equal to the cost
    structure; the strategic price clears the unique fixed-slope
    equilibrium intercepts at slopes equal to cost slopes.
    """
    rng = np.random.default_rng(seed)
    ratios = np.empty(n_samples)
    v_truth = np.empty(n_samples)
    v_eq = np.empty(n_samples)
    lo_c, hi_c = cost_slope_range
    lo_b, hi_b = cost_intercept_range
    for s in range(n_samples):
        c = rng.uniform(lo_c, hi_c, n_players)
        b = rng.uniform(lo_b, hi_b, n_players)
        v0 = clear_arrays(c, b, demand).price
        a_eq = equilibrium_intercepts(c, b, c, demand)
        v1 = clear_arrays(c, a_eq, demand).price
        v_truth[s] = v0
        v_eq[s] = v1
        ratios[s] = v1 / v0
    return PriceRatioResult(ratios=ratios, truthful_prices=v_truth,
                            strategic_prices=v_eq)


@dataclass(frozen=True)
class PriceGrowthResult:
    """Equilibrium price series along a slope-multiplier grid."""

    multipliers: np.ndarray
    base_prices: np.ndarray
    perturbed_prices: np.ndarray
    constrained_prices: np.ndarray | None


def price_growth_experiment(cost_slopes, cost_intercepts, demand: float,
                            multipliers, perturb_fraction: float = 0.0,
                            constrained: MarketInstance | None = None) -> PriceGrowthResult:
    """Trace the equilibrium price as all slopes are scaled up together.

    For each multiplier kappa the slopes are kappa * cost_slopes and the
    intercepts the corresponding unique equilibrium.  Three series are
    produced: the plain clearing price; the price after shrinking every
    opponent of player 0 by ``perturb_fraction``; and, when a constrained
    instance is supplied, the demand-weighted zonal price of the full
    network-constrained clearing under the same profile.
    """
    cost_slopes = np.atleast_1d(np.asarray(cost_slopes, dtype=float))
    cost_intercepts = np.atleast_1d(np.asarray(cost_intercepts, dtype=float))
    multipliers = np.atleast_1d(np.asarray(multipliers, dtype=float))
    base = np.empty(multipliers.shape[0])
    perturbed = np.empty(multipliers.shape[0])
    constrained_prices = (np.empty(multipliers.shape[0])
                          if constrained is not None else None)
    for idx, kappa in enumerate(multipliers):
        slopes = kappa * cost_slopes
        intercepts = equilibrium_intercepts(cost_slopes, cost_intercepts,
                                            slopes, demand)
        base[idx] = clear_arrays(slopes, intercepts, demand).price
        slopes_p = slopes.copy()
        intercepts_p = intercepts.copy()
        slopes_p[1:] *= (1.0 - perturb_fraction)
        intercepts_p[1:] *= (1.0 - perturb_fraction)
        perturbed[idx] = clear_arrays(slopes_p, intercepts_p, demand).price
        if constrained is not None:
            result = clear_market(constrained, StrategyProfile(slopes, intercepts))
            weights = constrained.zonal_demand / constrained.total_demand
            constrained_prices[idx] = float(np.nansum(result.prices * weights))
    return PriceGrowthResult(multipliers=multipliers, base_prices=base,
                             perturbed_prices=perturbed,
                             constrained_prices=constrained_prices)


def linear_fit_r_squared(x: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of determination of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot
