"""Per-player cost construction and zonal player selection.

Each production type is reduced to a two-parameter linear marginal cost
anchored at a reference price: the ask equals the reference at a chosen
capacity fraction, and exceeds it at full capacity by a type-specific
markup.  Zones retain their largest players by cumulative-capacity
thresholding, after which near-identical production types are merged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .clearing import MarketInputError, Player

# Strict convexity floor for the cost slope; protects types with near-zero
# markup and very large capacity.
MIN_COST_SLOPE = 1e-6

# Production types that are combined into one player after thresholding.
DEFAULT_MERGES = {
    "wind_onshore": "wind",
    "wind_offshore": "wind",
    "hydro_pumped_storage": "hydro_storage",
    "hydro_water_reservoir": "hydro_storage",
    "hard_coal": "coal",
    "brown_coal": "coal",
}

DEFAULT_COVERAGE_THRESHOLD = 0.88
DEFAULT_MIN_PLAYERS = 5


@dataclass(frozen=True)
class TypeParams:
    """Cost-shape parameters of one production type.

    ``markup`` is the relative increase of the marginal ask at full
    capacity over the reference price (in [0, 1], which keeps intercepts
    non-negative); ``anchor_fraction`` the capacity share at which the ask
    equals the reference price exactly.  The reference price itself comes
    either from ``price_constant`` (EUR/MWh) or from the fuel-price series
    named by ``price_series``.
    """

    name: str
    markup: float
    anchor_fraction: float = 0.5
    price_constant: float | None = None
    price_series: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.markup <= 1.0:
            raise MarketInputError(f"type {self.name}: markup must be in [0, 1]")
        if not 0.0 < self.anchor_fraction < 1.0:
            raise MarketInputError(f"type {self.name}: anchor_fraction must be in (0, 1)")
        if (self.price_constant is None) == (self.price_series is None):
            raise MarketInputError(
                f"type {self.name}: exactly one of price_constant/price_series required")


@dataclass(frozen=True)
class PlayerSelection:
    """Retained (type, capacity) pairs of one zone after thresholding."""

    zone: object
    retained: tuple
    coverage: float
    n_star: int


def cost_from_reference_price(reference_price: float, markup: float,
                              anchor_fraction: float, capacity: float):
    """Linear marginal-cost parameters (slope, intercept) for one player.

    The marginal ask  b + c x  satisfies two anchors exactly: it equals
    ``reference_price`` at ``anchor_fraction * capacity`` and
    ``(1 + markup) * reference_price`` at full capacity.  The slope is
    clamped below by MIN_COST_SLOPE to preserve strict convexity.
    """
    if capacity <= 0.0:
        raise MarketInputError("capacity must be > 0 to derive a cost curve")
    if not 0.0 < anchor_fraction < 1.0:
        raise MarketInputError("anchor_fraction must be in (0, 1)")
    intercept = reference_price * (1.0 - markup * anchor_fraction / (1.0 - anchor_fraction))
    slope = markup * reference_price / ((1.0 - anchor_fraction) * capacity)
    if intercept < 0.0:
        raise MarketInputError(
            f"derived cost intercept {intercept} < 0; markup/anchor incompatible")
    return max(slope, MIN_COST_SLOPE), intercept


def select_players(zone: object, zone_capacities: Sequence[tuple],
                   threshold: float = DEFAULT_COVERAGE_THRESHOLD,
                   min_players: int = DEFAULT_MIN_PLAYERS,
                   merge_map: Mapping[str, str] = DEFAULT_MERGES) -> PlayerSelection:
    """Retain the zone's largest players, then merge similar types.

    Types are ranked by installed capacity (descending, input order on
    ties); the retained count is the smallest reaching the coverage
    threshold, but never below ``min_players`` (or the number of available
    types).  Merging sums capacities of retained entries mapping to the
    same canonical type.
    """
    entries = [(str(t), float(cap)) for t, cap in zone_capacities]
    for t, cap in entries:
        if cap < 0.0:
            raise MarketInputError(f"zone {zone}: negative capacity for type {t}")
    if not entries:
        return PlayerSelection(zone=zone, retained=(), coverage=0.0, n_star=0)
    order = sorted(range(len(entries)), key=lambda i: (-entries[i][1], i))
    total = sum(cap for _, cap in entries)
    floor = min(min_players, len(entries))
    n_star = len(entries)
    if total > 0.0:
        cumulative = 0.0
        for rank, idx in enumerate(order, start=1):
            cumulative += entries[idx][1]
            if cumulative / total >= threshold and rank >= floor:
                n_star = rank
                break
    else:
        n_star = floor
    picked = [entries[i] for i in order[:n_star]]
    coverage = sum(cap for _, cap in picked) / total if total > 0.0 else 0.0
    merged: dict[str, float] = {}
    for t, cap in picked:
        canonical = merge_map.get(t, t)
        merged[canonical] = merged.get(canonical, 0.0) + cap
    return PlayerSelection(zone=zone, retained=tuple(merged.items()),
                           coverage=coverage, n_star=n_star)


def apply_scales(players: Sequence[Player], slope_scales: np.ndarray,
                 intercept_scales: np.ndarray) -> tuple:
    """Rescale cost parameters zone by zone; capacities are untouched."""
    slope_scales = np.atleast_1d(np.asarray(slope_scales, dtype=float))
    intercept_scales = np.atleast_1d(np.asarray(intercept_scales, dtype=float))
    if np.any(slope_scales <= 0.0) or np.any(intercept_scales <= 0.0):
        raise MarketInputError("cost scales must be > 0")
    out = []
    for p in players:
        if p.zone >= slope_scales.shape[0]:
            raise MarketInputError(f"no scale provided for zone {p.zone}")
        out.append(replace(p,
                           cost_slope=p.cost_slope * float(slope_scales[p.zone]),
                           cost_intercept=p.cost_intercept * float(intercept_scales[p.zone])))
    return tuple(out)
