"""Cost-scale calibration against observed zonal prices.

Two scale factors per zone (on cost slopes and intercepts) are fitted so
that truthful-bid clearing reproduces a target price series in the
mean-squared sense.  The derivative of a zonal price with respect to its
zone's scales only involves the price-setting player, which gives cheap
analytic gradients; the clearing allocation is treated as locally
constant in the scales, so the objective is piecewise smooth and the
descent uses the one-sided gradient at active-set kinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clearing import (MarketInputError, MarketInstance, StrategyProfile,
                       clear_market, price_setting_player)
from .costs import apply_scales

SCALE_FLOOR = 1e-3
ARMIJO_SHRINK = 0.5
ARMIJO_SLOPE = 1e-4


class CalibrationError(RuntimeError):
    """No usable hour, or an ill-posed adjustment."""


@dataclass(frozen=True)
class Scales:
    """Per-zone multipliers on cost slopes and intercepts."""

    slope: np.ndarray
    intercept: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slope", np.atleast_1d(np.asarray(self.slope, dtype=float)))
        object.__setattr__(self, "intercept", np.atleast_1d(np.asarray(self.intercept, dtype=float)))
        if self.slope.shape != self.intercept.shape:
            raise MarketInputError("scale vectors must align")
        if np.any(self.slope <= 0.0) or np.any(self.intercept <= 0.0):
            raise MarketInputError("scales must be > 0")

    @property
    def n_zones(self) -> int:
        return self.slope.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate([self.slope, self.intercept])

    @staticmethod
    def unpack(vector: np.ndarray) -> "Scales":
        vector = np.asarray(vector, dtype=float)
        half = vector.shape[0] // 2
        return Scales(vector[:half], vector[half:])

    @staticmethod
    def ones(n_zones: int) -> "Scales":
        return Scales(np.ones(n_zones), np.ones(n_zones))


@dataclass
class CalibrationProblem:
    """Hourly instances, aligned target prices, and optimiser settings."""

    hours: tuple
    targets: np.ndarray  # (n_hours, n_zones)
    initial: Scales | None = None
    armijo_shrink: float = ARMIJO_SHRINK
    armijo_slope: float = ARMIJO_SLOPE
    initial_step: float = 1.0
    scale_floor: float = SCALE_FLOOR

    def __post_init__(self):
        self.hours = tuple(self.hours)
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if not self.hours:
            raise MarketInputError("calibration needs at least one hour")
        n_zones = self.hours[0].n_zones
        if self.targets.shape != (len(self.hours), n_zones):
            raise MarketInputError(
                f"targets shape {self.targets.shape} != ({len(self.hours)}, {n_zones})")
        if self.initial is None:
            self.initial = Scales.ones(n_zones)

    @property
    def n_zones(self) -> int:
        return self.hours[0].n_zones


@dataclass(frozen=True)
class HourEvaluation:
    prices: np.ndarray
    setters: np.ndarray        # price-setting player index per zone
    setter_slopes: np.ndarray  # unscaled cost slope of the setter
    setter_intercepts: np.ndarray
    setter_quantities: np.ndarray


@dataclass(frozen=True)
class ProblemEvaluation:
    """Truthful clearings of all usable hours under given scales."""

    value: float
    hour_evals: tuple
    usable: np.ndarray  # bool per hour
    skipped: int

    @property
    def n_usable(self) -> int:
        return int(np.sum(self.usable))


def _evaluate_hour(instance: MarketInstance, scales: Scales) -> HourEvaluation | None:
    scaled = apply_scales(instance.players, scales.slope, scales.intercept)
    scaled_instance = MarketInstance(scaled, instance.zonal_demand, instance.network)
    profile = scaled_instance.truthful_profile()
    result = clear_market(scaled_instance, profile)
    if not result.optimal or np.any(np.isnan(result.prices)):
        return None
    n_zones = instance.n_zones
    setters = np.empty(n_zones, dtype=int)
    c_k = np.empty(n_zones)
    b_k = np.empty(n_zones)
    x_k = np.empty(n_zones)
    for z in range(n_zones):
        k = price_setting_player(result, scaled_instance, profile, z)
        setters[z] = k
        c_k[z] = instance.players[k].cost_slope
        b_k[z] = instance.players[k].cost_intercept
        x_k[z] = result.x[k]
    return HourEvaluation(prices=result.prices, setters=setters,
                          setter_slopes=c_k, setter_intercepts=b_k,
                          setter_quantities=x_k)


def evaluate(problem: CalibrationProblem, scales: Scales) -> ProblemEvaluation:
    """Clear every hour truthfully under scaled costs.

    Hours that are infeasible or leave a zone without a defined price are
    skipped and counted; an empty remainder is an error.
    """
    hour_evals = []
    usable = np.zeros(len(problem.hours), dtype=bool)
    total = 0.0
    for t, instance in enumerate(problem.hours):
        ev = _evaluate_hour(instance, scales)
        hour_evals.append(ev)
        if ev is None:
            continue
        usable[t] = True
        total += float(np.sum((ev.prices - problem.targets[t]) ** 2))
    n_usable = int(np.sum(usable))
    if n_usable == 0:
        raise CalibrationError("no usable hour: all clearings infeasible or unpriced")
    return ProblemEvaluation(value=total / n_usable, hour_evals=tuple(hour_evals),
                             usable=usable, skipped=len(problem.hours) - n_usable)


def objective(problem: CalibrationProblem, scales: Scales) -> float:
    """Mean over hours of the summed squared zonal price errors."""
    return evaluate(problem, scales).value


def gradient(problem: CalibrationProblem, scales: Scales,
             evaluation: ProblemEvaluation | None = None) -> Scales:
    """Analytic objective gradient with the allocation held fixed.

    Per hour and zone, the price responds to its zone's scales only
    through the price-setting player k:  dv/ds_c = c_k x_k and
    dv/ds_b = b_k  (unscaled cost parameters, cleared quantity), so each
    squared residual contributes 2 (v - P) times those sensitivities.
    """
    ev = evaluate(problem, scales) if evaluation is None else evaluation
    gc = np.zeros(problem.n_zones)
    gb = np.zeros(problem.n_zones)
    for t, hour_eval in enumerate(ev.hour_evals):
        if hour_eval is None:
            continue
        res = hour_eval.prices - problem.targets[t]
        gc += 2.0 * res * hour_eval.setter_slopes * hour_eval.setter_quantities
        gb += 2.0 * res * hour_eval.setter_intercepts
    return _as_gradient(gc / ev.n_usable, gb / ev.n_usable)


def _as_gradient(gc: np.ndarray, gb: np.ndarray) -> Scales:
    # Gradient components may be negative or zero; bypass the positivity
    # check Scales enforces on genuine scale vectors.
    grad = object.__new__(Scales)
    object.__setattr__(grad, "slope", gc)
    object.__setattr__(grad, "intercept", gb)
    return grad


def hessian_blocks(problem: CalibrationProblem, scales: Scales,
                   evaluation: ProblemEvaluation | None = None) -> np.ndarray:
    """Per-zone 2x2 Gauss-Newton blocks, summed over hours.

    Each usable (hour, zone) adds the outer product of
    (c_k x_k, b_k) with itself; cross-zone curvature is exactly zero.
    The mean-over-hours normalisation and the factor 2 of the residual
    derivative are left to the caller (the true Hessian of the objective
    is 2/N times these sums where the price-setting player is locally
    constant).
    """
    ev = evaluate(problem, scales) if evaluation is None else evaluation
    blocks = np.zeros((problem.n_zones, 2, 2))
    for t, hour_eval in enumerate(ev.hour_evals):
        if hour_eval is None:
            continue
        cx = hour_eval.setter_slopes * hour_eval.setter_quantities
        b = hour_eval.setter_intercepts
        blocks[:, 0, 0] += cx * cx
        blocks[:, 0, 1] += cx * b
        blocks[:, 1, 0] += cx * b
        blocks[:, 1, 1] += b * b
    return blocks


@dataclass
class FitResult:
    scales: Scales
    value: float
    trace: list = field(default_factory=list)  # (iteration, objective, step)
    converged: bool = False
    reason: str = ""


def fit_truthful_scales(problem: CalibrationProblem, grad_tol: float = 1e-10,
                        max_iters: int = 500) -> FitResult:
    """Gradient descent with Armijo backtracking on the truthful-bid model.

    Accepted steps strictly decrease the objective; iterates are projected
    onto the scale floor.  Terminates on small gradient, exhausted
    backtracking, or the iteration cap.
    """
    scales = problem.initial
    vector = scales.pack()
    ev = evaluate(problem, scales)
    value = ev.value
    trace = [(0, value, 0.0)]
    reason = "max_iters"
    converged = False
    for it in range(1, max_iters + 1):
        grad = gradient(problem, scales, ev)
        gvec = grad.pack()
        gnorm = float(np.linalg.norm(gvec))
        if gnorm <= grad_tol:
            converged = True
            reason = "gradient_tolerance"
            break
        step = problem.initial_step
        accepted = False
        while step > 1e-16:
            candidate = np.maximum(vector - step * gvec, problem.scale_floor)
            direction = candidate - vector
            if not np.any(direction):
                break
            cand_scales = Scales.unpack(candidate)
            try:
                cand_ev = evaluate(problem, cand_scales)
            except CalibrationError:
                step *= problem.armijo_shrink
                continue
            if cand_ev.value <= value + problem.armijo_slope * float(gvec @ direction):
                vector, scales, ev, value = candidate, cand_scales, cand_ev, cand_ev.value
                trace.append((it, value, step))
                accepted = True
                break
            step *= problem.armijo_shrink
        if not accepted:
            reason = "line_search_failed"
            break
    return FitResult(scales=scales, value=value, trace=trace,
                     converged=converged, reason=reason)


def ratio_adjust_scales(problem: CalibrationProblem, fitted: Scales,
                        hours_subset, strategic_price_fn) -> Scales:
    """One-step slope-scale adjustment for the strategic-bidding model.

    ``strategic_price_fn(instance)`` must return the strategic-model zonal
    price vector of an (already scaled) hour.  The slope scales divide by
    the per-zone average ratio of strategic prices to targets over the
    subset; intercept scales are kept.
    """
    hours_subset = [int(t) for t in hours_subset]
    if not hours_subset:
        raise CalibrationError("empty hour subset for ratio adjustment")
    ratios = np.zeros(problem.n_zones)
    for t in hours_subset:
        instance = problem.hours[t]
        scaled = MarketInstance(apply_scales(instance.players, fitted.slope,
                                             fitted.intercept),
                                instance.zonal_demand, instance.network)
        prices = np.asarray(strategic_price_fn(scaled), dtype=float)
        target = problem.targets[t]
        if np.any(target == 0.0) or np.any(np.isnan(prices)):
            raise CalibrationError(f"hour {t}: zero target or undefined strategic price")
        ratios += prices / target
    ratios /= len(hours_subset)
    if np.any(ratios <= 0.0):
        raise CalibrationError("non-positive average price ratio")
    return Scales(fitted.slope / ratios, fitted.intercept.copy())
