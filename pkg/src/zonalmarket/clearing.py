"""Hourly zonal market clearing.

One hour of the day-ahead auction is cleared by minimising the integral
of submitted marginal asks subject to supply/demand balance, producer
capacity boxes, and flow-based network constraints expressed on zonal
net exports.  Zonal prices are read off the optimal allocation as the
highest marginal ask among active producers of each zone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .qp import Cqp, CqpSolution, OPTIMAL, solve_cqp

ACTIVITY_EPS_REL = 1e-7  # share of total demand below which a producer counts as inactive


class MarketInputError(ValueError):
    """Inconsistent market instance or strategy data."""


class UndefinedPriceError(RuntimeError):
    """A zone has no active producer, so its price is undefined."""


class InfeasibleMarketError(RuntimeError):
    """The clearing problem admits no feasible allocation."""


@dataclass(frozen=True)
class Player:
    """One producer: true cost structure and capacity.

    Marginal cost is ``cost_slope * x + cost_intercept`` (EUR/MWh) for an
    allocation x in MWh, bounded by ``capacity``.
    """

    id: int
    zone: int
    cost_slope: float
    cost_intercept: float
    capacity: float

    def __post_init__(self):
        if self.cost_slope <= 0.0:
            raise MarketInputError(f"player {self.id}: cost_slope must be > 0")
        if self.cost_intercept < 0.0:
            raise MarketInputError(f"player {self.id}: cost_intercept must be >= 0")
        if self.capacity < 0.0:
            raise MarketInputError(f"player {self.id}: capacity must be >= 0")


@dataclass(frozen=True)
class Strategy:
    """Submitted order: marginal ask ``slope * x + intercept``."""

    slope: float
    intercept: float

    def __post_init__(self):
        if not self.slope > 0.0:
            raise MarketInputError("strategy slope must be > 0")


@dataclass(frozen=True)
class StrategyProfile:
    """Per-player submitted order parameters, aligned with instance players."""

    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slopes", np.asarray(self.slopes, dtype=float))
        object.__setattr__(self, "intercepts", np.asarray(self.intercepts, dtype=float))
        if self.slopes.shape != self.intercepts.shape or self.slopes.ndim != 1:
            raise MarketInputError("slopes/intercepts must be 1-d and aligned")
        if np.any(self.slopes <= 0.0) or not np.all(np.isfinite(self.slopes)):
            raise MarketInputError("all strategy slopes must be finite and > 0")
        if not np.all(np.isfinite(self.intercepts)):
            raise MarketInputError("strategy intercepts must be finite")

    def __len__(self) -> int:
        return self.slopes.shape[0]

    def strategy(self, i: int) -> Strategy:
        return Strategy(float(self.slopes[i]), float(self.intercepts[i]))

    def with_strategy(self, i: int, strategy: Strategy) -> "StrategyProfile":
        slopes = self.slopes.copy()
        intercepts = self.intercepts.copy()
        slopes[i] = strategy.slope
        intercepts[i] = strategy.intercept
        return StrategyProfile(slopes, intercepts)

    @staticmethod
    def from_strategies(strategies: Iterable[Strategy]) -> "StrategyProfile":
        strategies = list(strategies)
        return StrategyProfile(np.array([s.slope for s in strategies]),
                               np.array([s.intercept for s in strategies]))


@dataclass(frozen=True)
class NetworkPolytope:
    """Linear constraints on zonal net production y.

    ``matrix @ y <= limits`` collects the flow rows (PTDF rows shifted by
    zonal demand) and ``zone_box_lo <= y <= zone_box_hi`` closes the
    feasible region.  Box bounds must be finite.
    """

    matrix: np.ndarray
    limits: np.ndarray
    zone_box_lo: np.ndarray
    zone_box_hi: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        lim = np.atleast_1d(np.asarray(self.limits, dtype=float))
        lo = np.atleast_1d(np.asarray(self.zone_box_lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.zone_box_hi, dtype=float))
        if mat.size == 0:
            mat = mat.reshape(0, lo.shape[0])
        if mat.ndim != 2 or mat.shape[1] != lo.shape[0]:
            raise MarketInputError("network matrix columns must equal zone count")
        if lim.shape != (mat.shape[0],):
            raise MarketInputError("network limits length must equal row count")
        if lo.shape != hi.shape:
            raise MarketInputError("zone box bounds must align")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise MarketInputError("zone box bounds must be finite")
        if np.any(lo > hi):
            raise MarketInputError("zone box lower bounds exceed upper bounds")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "limits", lim)
        object.__setattr__(self, "zone_box_lo", lo)
        object.__setattr__(self, "zone_box_hi", hi)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_zones(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class MarketInstance:
    """Complete clearing input for one hour."""

    players: tuple
    zonal_demand: np.ndarray
    network: NetworkPolytope | None = None

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        demand = np.atleast_1d(np.asarray(self.zonal_demand, dtype=float))
        object.__setattr__(self, "zonal_demand", demand)
        if not self.players:
            raise MarketInputError("instance needs at least one player")
        if self.total_demand <= 0.0:
            raise MarketInputError("total demand must be > 0")
        n_zones = demand.shape[0]
        for p in self.players:
            if not 0 <= p.zone < n_zones:
                raise MarketInputError(f"player {p.id} references unknown zone {p.zone}")
        if self.network is not None and self.network.n_zones != n_zones:
            raise MarketInputError("network zone count does not match demand vector")

    @property
    def n_players(self) -> int:
        return len(self.players)

    @property
    def n_zones(self) -> int:
        return self.zonal_demand.shape[0]

    @property
    def total_demand(self) -> float:
        return float(np.sum(self.zonal_demand))

    @property
    def zones(self) -> np.ndarray:
        return np.array([p.zone for p in self.players], dtype=int)

    @property
    def cost_slopes(self) -> np.ndarray:
        return np.array([p.cost_slope for p in self.players])

    @property
    def cost_intercepts(self) -> np.ndarray:
        return np.array([p.cost_intercept for p in self.players])

    @property
    def capacities(self) -> np.ndarray:
        return np.array([p.capacity for p in self.players])

    @property
    def activity_threshold(self) -> float:
        return ACTIVITY_EPS_REL * self.total_demand

    def incidence(self) -> np.ndarray:
        """Zone-by-player incidence E with y = E x."""
        E = np.zeros((self.n_zones, self.n_players))
        for col, p in enumerate(self.players):
            E[p.zone, col] = 1.0
        return E

    def truthful_profile(self) -> StrategyProfile:
        return StrategyProfile(self.cost_slopes, self.cost_intercepts)


@dataclass(frozen=True)
class ClearingResult:
    """Optimal allocation, zonal productions and prices for one hour.

    ``prices`` holds NaN for a zone with no active producer (price
    undefined there); ``objective`` is the social-welfare value, i.e. the
    negative of the minimised ask integral.
    """

    x: np.ndarray
    y: np.ndarray
    prices: np.ndarray
    status: str
    objective: float
    diagnostics: str | None = None
    solution: CqpSolution | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def build_clearing_qp(instance: MarketInstance, profile: StrategyProfile) -> Cqp:
    """Assemble the clearing QP for one hour and strategy profile.

    The objective integrates the submitted asks, balance is a single
    equality on total production, producer capacities become box bounds,
    and network flow rows plus zonal production boxes become general
    inequality rows on E x.
    """
    if len(profile) != instance.n_players:
        raise MarketInputError(
            f"profile has {len(profile)} strategies for {instance.n_players} players")
    n = instance.n_players
    if instance.network is None:
        rows = np.zeros((0, n))
        rhs = np.zeros(0)
    else:
        E = instance.incidence()
        net = instance.network
        rows = np.vstack([net.matrix @ E, E, -E])
        rhs = np.concatenate([net.limits, net.zone_box_hi, -net.zone_box_lo])
    return Cqp(
        diag_hessian=profile.slopes,
        linear_cost=profile.intercepts,
        ineq_matrix=rows,
        ineq_rhs=rhs,
        lower_bounds=np.zeros(n),
        upper_bounds=instance.capacities,
        eq_vector=np.ones(n),
        eq_rhs=instance.total_demand,
    )


def clear_market(instance: MarketInstance, profile: StrategyProfile,
                 tol: float = 1e-8,
                 warm_start: CqpSolution | None = None) -> ClearingResult:
    """Clear one hour: solve the QP, map to zonal productions and prices."""
    problem = build_clearing_qp(instance, profile)
    sol = solve_cqp(problem, tol=tol, warm_start=warm_start)
    E = instance.incidence()
    y = E @ sol.x
    if sol.status != OPTIMAL:
        return ClearingResult(x=sol.x, y=y, prices=np.full(instance.n_zones, np.nan),
                              status=sol.status, objective=np.nan,
                              diagnostics=f"infeasible clearing: {sol.certificate}",
                              solution=sol)
    prices = np.full(instance.n_zones, np.nan)
    eps = instance.activity_threshold
    zones = instance.zones
    asks = profile.slopes * sol.x + profile.intercepts
    undefined = []
    for z in range(instance.n_zones):
        active = (zones == z) & (sol.x > eps)
        if np.any(active):
            prices[z] = float(np.max(asks[active]))
        else:
            undefined.append(z)
    welfare = -problem.objective(sol.x)
    diag = None
    if undefined:
        diag = "undefined price in zones " + ",".join(map(str, undefined))
    return ClearingResult(x=sol.x, y=y, prices=prices, status=sol.status,
                          objective=welfare, diagnostics=diag, solution=sol)


def zonal_price(result: ClearingResult, instance: MarketInstance,
                profile: StrategyProfile, zone: int) -> float:
    """Highest marginal ask among the zone's active producers."""
    if not result.optimal:
        raise InfeasibleMarketError(result.diagnostics or "clearing not optimal")
    eps = instance.activity_threshold
    zones = instance.zones
    active = (zones == zone) & (result.x > eps)
    if not np.any(active):
        raise UndefinedPriceError(f"zone {zone} has no active producer")
    asks = profile.slopes * result.x + profile.intercepts
    return float(np.max(asks[active]))


def price_setting_player(result: ClearingResult, instance: MarketInstance,
                         profile: StrategyProfile, zone: int) -> int:
    """Index of the active producer whose ask sets the zonal price.

    Ties are broken toward the lowest player index.
    """
    if not result.optimal:
        raise InfeasibleMarketError(result.diagnostics or "clearing not optimal")
    eps = instance.activity_threshold
    zones = instance.zones
    active = np.flatnonzero((zones == zone) & (result.x > eps))
    if active.size == 0:
        raise UndefinedPriceError(f"zone {zone} has no active producer")
    asks = profile.slopes[active] * result.x[active] + profile.intercepts[active]
    return int(active[np.argmax(asks)])


def player_profit(result: ClearingResult, instance: MarketInstance,
                  profile: StrategyProfile, i: int) -> float:
    """Realised profit of player i: revenue at the zonal price minus true cost."""
    if not result.optimal:
        raise InfeasibleMarketError(result.diagnostics or "clearing not optimal")
    player = instance.players[i]
    xi = float(result.x[i])
    price = result.prices[player.zone]
    if np.isnan(price):
        if xi <= instance.activity_threshold:
            return 0.0
        raise UndefinedPriceError(
            f"zone {player.zone} price undefined but player {i} active")
    return price * xi - 0.5 * player.cost_slope * xi ** 2 - player.cost_intercept * xi


def assemble_polytope(ptdf: np.ndarray, flow_lower: np.ndarray,
                      flow_upper: np.ndarray, zonal_demand: np.ndarray,
                      max_deviation: float) -> NetworkPolytope:
    """Build the network polytope from PTDF rows and flow margins.

    Margins apply to net exports y - d, so the rows on y are shifted by
    ``ptdf @ d``.  Zonal production boxes
    ``(1 - max_deviation) d <= y <= (1 + max_deviation) d`` close the set.
    """
    ptdf = np.asarray(ptdf, dtype=float)
    lower = np.atleast_1d(np.asarray(flow_lower, dtype=float))
    upper = np.atleast_1d(np.asarray(flow_upper, dtype=float))
    demand = np.atleast_1d(np.asarray(zonal_demand, dtype=float))
    if ptdf.size == 0:
        ptdf = ptdf.reshape(0, demand.shape[0])
    if ptdf.ndim != 2 or ptdf.shape[1] != demand.shape[0]:
        raise MarketInputError("ptdf columns must equal zone count")
    if lower.shape != (ptdf.shape[0],) or upper.shape != (ptdf.shape[0],):
        raise MarketInputError("flow margins must align with ptdf rows")
    if np.any(lower > upper):
        raise MarketInputError("flow lower margin exceeds upper margin")
    if not 0.0 < max_deviation < 1.0:
        raise MarketInputError("max_deviation must lie in (0, 1)")
    shift = ptdf @ demand
    matrix = np.vstack([-ptdf, ptdf])
    limits = np.concatenate([-lower - shift, upper + shift])
    return NetworkPolytope(matrix=matrix, limits=limits,
                           zone_box_lo=(1.0 - max_deviation) * demand,
                           zone_box_hi=(1.0 + max_deviation) * demand)


def scale_costs(players: Sequence[Player], slope_factor: float,
                intercept_factor: float) -> tuple:
    """Uniformly rescale all players' cost parameters (testing helper)."""
    return tuple(replace(p, cost_slope=p.cost_slope * slope_factor,
                         cost_intercept=p.cost_intercept * intercept_factor)
                 for p in players)
