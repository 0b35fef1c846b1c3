"""Two-dimensional bidding-state detection.

Hourly price errors of the truthful-bid model and the strategic model are
tested per zone against Gaussian null distributions fitted to the error
series.  The pair of test outcomes places each (zone, hour) in one of
nine regions, mapped to market states: null, truthful with high
probability, strategic with high probability, expected anomaly (both
models over-predict), or other anomaly (the models disagree in extreme
directions).  Zone states aggregate to one market state per hour by
severity precedence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.special import ndtri


class DetectionError(ValueError):
    """Degenerate error series or misaligned inputs."""


class MarketState(IntEnum):
    """Hourly market state; higher values take precedence in aggregation."""

    NULL = 0
    TRUTHFUL = 1
    STRATEGIC = 2
    EXPECTED_ANOMALY = 3
    OTHER_ANOMALY = 4


# (truthful-error class, strategic-error class) -> region number; classes are
# -1 below the confidence interval, 0 inside, +1 above.  Below the interval
# the model over-predicts, above it under-predicts.
REGION_GRID = {
    (-1, 1): 1, (0, 1): 8, (1, 1): 3,
    (-1, 0): 4, (0, 0): 5, (1, 0): 6,
    (-1, -1): 7, (0, -1): 2, (1, -1): 9,
}

REGION_STATE = {
    1: MarketState.OTHER_ANOMALY,
    2: MarketState.TRUTHFUL,
    3: MarketState.STRATEGIC,
    4: MarketState.STRATEGIC,
    5: MarketState.NULL,
    6: MarketState.STRATEGIC,
    7: MarketState.EXPECTED_ANOMALY,
    8: MarketState.TRUTHFUL,
    9: MarketState.OTHER_ANOMALY,
}


@dataclass(frozen=True)
class ErrorPair:
    """One hour's (truthful-model, strategic-model) price errors."""

    truthful: float
    strategic: float


@dataclass(frozen=True)
class NullModel:
    """Gaussian null hypothesis with a symmetric confidence interval."""

    mean: float
    std: float
    ci_lo: float
    ci_hi: float
    confidence: float

    def classify(self, value: float) -> int:
        if value < self.ci_lo:
            return -1
        if value > self.ci_hi:
            return 1
        return 0


@dataclass(frozen=True)
class StateLabel:
    state: MarketState
    region: int


@dataclass(frozen=True)
class StateSeries:
    """Per-zone and aggregated detection results for an hourly series."""

    zone_states: np.ndarray   # (n_zones, n_hours) of MarketState values
    regions: np.ndarray       # (n_zones, n_hours) of region numbers
    aggregate: np.ndarray     # (n_hours,) of MarketState values
    truthful_nulls: tuple
    strategic_nulls: tuple

    @property
    def n_zones(self) -> int:
        return self.zone_states.shape[0]

    @property
    def n_hours(self) -> int:
        return self.zone_states.shape[1]


def normal_quantile(p: float) -> float:
    """Standard normal inverse CDF."""
    return float(ndtri(p))


def fit_null(errors, confidence: float = 0.975) -> NullModel:
    """Fit the Gaussian null to an error series.

    Mean and standard deviation are the empirical estimators (sample
    standard deviation); the symmetric interval covers ``confidence``
    probability mass under the fitted Gaussian.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 1 or errors.shape[0] < 2:
        raise DetectionError("need at least two error samples")
    if not np.all(np.isfinite(errors)):
        raise DetectionError("error series contains non-finite values")
    if not 0.0 <= confidence < 1.0:
        raise DetectionError("confidence must lie in [0, 1)")
    mean = float(np.mean(errors))
    std = float(np.std(errors, ddof=1))
    if std <= 0.0:
        raise DetectionError("degenerate error series: zero standard deviation")
    z = normal_quantile(0.5 * (1.0 + confidence))
    return NullModel(mean=mean, std=std, ci_lo=mean - z * std,
                     ci_hi=mean + z * std, confidence=confidence)


def classify_point(pair: ErrorPair, truthful_null: NullModel,
                   strategic_null: NullModel) -> StateLabel:
    """Map one error pair to its region and market state."""
    key = (truthful_null.classify(pair.truthful),
           strategic_null.classify(pair.strategic))
    region = REGION_GRID[key]
    return StateLabel(state=REGION_STATE[region], region=region)


def aggregate_states(zone_states) -> MarketState:
    """Single market state for one hour: the most severe zone state."""
    states = [MarketState(s.state if isinstance(s, StateLabel) else s)
              for s in zone_states]
    if not states:
        raise DetectionError("cannot aggregate an empty state vector")
    return MarketState(max(states))


def run_state_detection(truthful_prices, strategic_prices, target_prices,
                        confidence: float = 0.975) -> StateSeries:
    """Classify every (zone, hour) and aggregate per hour.

    Inputs are (n_hours, n_zones) price matrices aligned over the same
    hours and zones.  Error series are target minus model price; nulls are
    fitted per zone on the full series.
    """
    truthful_prices = np.atleast_2d(np.asarray(truthful_prices, dtype=float))
    strategic_prices = np.atleast_2d(np.asarray(strategic_prices, dtype=float))
    target_prices = np.atleast_2d(np.asarray(target_prices, dtype=float))
    if not (truthful_prices.shape == strategic_prices.shape == target_prices.shape):
        raise DetectionError(
            f"misaligned price series: {truthful_prices.shape}, "
            f"{strategic_prices.shape}, {target_prices.shape}")
    n_hours, n_zones = target_prices.shape
    truthful_errors = target_prices - truthful_prices
    strategic_errors = target_prices - strategic_prices
    zone_states = np.empty((n_zones, n_hours), dtype=int)
    regions = np.empty((n_zones, n_hours), dtype=int)
    truthful_nulls = []
    strategic_nulls = []
    for z in range(n_zones):
        null_tb = fit_null(truthful_errors[:, z], confidence)
        null_gt = fit_null(strategic_errors[:, z], confidence)
        truthful_nulls.append(null_tb)
        strategic_nulls.append(null_gt)
        for t in range(n_hours):
            label = classify_point(ErrorPair(truthful_errors[t, z],
                                             strategic_errors[t, z]),
                                   null_tb, null_gt)
            zone_states[z, t] = int(label.state)
            regions[z, t] = label.region
    aggregate = zone_states.max(axis=0)
    return StateSeries(zone_states=zone_states, regions=regions,
                       aggregate=aggregate,
                       truthful_nulls=tuple(truthful_nulls),
                       strategic_nulls=tuple(strategic_nulls))


def hour_of_day_profile(series: StateSeries, start_hour: int = 0) -> np.ndarray:
    """State counts per hour of day: (n_zones + 1, 24, n_states).

    The last block row aggregates the market state; hour-of-day is the
    series index offset by ``start_hour`` modulo 24.
    """
    n_states = len(MarketState)
    profile = np.zeros((series.n_zones + 1, 24, n_states), dtype=int)
    for t in range(series.n_hours):
        hod = (t + start_hour) % 24
        for z in range(series.n_zones):
            profile[z, hod, series.zone_states[z, t]] += 1
        profile[series.n_zones, hod, series.aggregate[t]] += 1
    return profile
