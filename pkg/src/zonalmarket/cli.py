"""Command-line entry point.

Subcommands drive the pipeline stages: ``clear`` (truthful-bid hourly
prices), ``nash`` (strategic equilibrium prices), ``synthetic`` (the
single-zone experiment suites), ``calibrate`` (cost-scale fitting), and
``detect`` (bidding-state classification).  Every output CSV embeds the
hash of the resolved configuration and the seed, so repeated runs with
the same inputs are byte-identical.

Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import calibration, dataio, detection, nash, rss, simplified
from .clearing import (MarketInputError, MarketInstance, Player,
                       assemble_polytope, clear_market)
from .costs import apply_scales
from .detection import MarketState
from .qp import QpSolverFailure


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the CLI contract
    reserves 2 for numerical failures, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config_hash(options: dict) -> str:
    semantic = {k: v for k, v in options.items() if k != "out"}
    canonical = json.dumps(semantic, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _meta(options: dict) -> dict:
    return {"config_hash": _config_hash(options), "seed": options.get("seed", 0)}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise dataio.DataError(f"missing config file: {path}")
    with open(path) as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise dataio.DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise dataio.DataError(f"{path}: config must be a JSON object")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zonalmarket",
                     description="Zonal day-ahead market simulation toolkit")
    sub = parser.add_subparsers(dest="mode", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed recorded in outputs")

    p_clear = sub.add_parser("clear", help="truthful-bid hourly clearing")
    common(p_clear)
    p_clear.add_argument("--dataset", help="dataset directory")
    p_clear.add_argument("--scales", help="cost-scale CSV to apply")
    p_clear.add_argument("--max-deviation", type=float,
                         help="zonal production box half-width (default 0.6)")

    p_nash = sub.add_parser("nash", help="strategic equilibrium hourly prices")
    common(p_nash)
    p_nash.add_argument("--dataset", help="dataset directory")
    p_nash.add_argument("--scales", help="cost-scale CSV to apply")
    p_nash.add_argument("--max-deviation", type=float)
    p_nash.add_argument("--n-pts", type=int, help="grid points per strategy segment")
    p_nash.add_argument("--max-cycles", type=int)
    p_nash.add_argument("--delta-ne", type=float, help="slope-vector stop tolerance")
    p_nash.add_argument("--schedule", choices=["jacobi", "gauss_seidel"])
    p_nash.add_argument("--presolve-n-pts", type=int,
                        help="coarse presolve grid (0 disables)")

    p_syn = sub.add_parser("synthetic", help="single-zone experiment suites")
    common(p_syn)
    p_syn.add_argument("--figure", type=int, choices=[4, 5, 6], required=True)
    p_syn.add_argument("--samples", type=int, help="sample count (figure 4)")
    p_syn.add_argument("--players", type=int, help="player count (figure 4)")
    p_syn.add_argument("--demand", type=float)
    p_syn.add_argument("--grid-points", type=int,
                       help="landscape/multiplier resolution (figures 5, 6)")
    p_syn.add_argument("--k-max", type=float, help="largest slope multiplier (figure 6)")
    p_syn.add_argument("--perturb", type=float, help="opponent shrink fraction (figure 6)")

    p_cal = sub.add_parser("calibrate", help="fit per-zone cost scales")
    common(p_cal)
    p_cal.add_argument("--dataset", help="dataset directory")
    p_cal.add_argument("--targets", help="observed zonal prices CSV")
    p_cal.add_argument("--max-deviation", type=float)
    p_cal.add_argument("--max-iters", type=int)
    p_cal.add_argument("--gt-adjust", action="store_const", const=True,
                       default=None,
                       help="also ratio-adjust slope scales for the strategic model")
    p_cal.add_argument("--gt-hours", help="subset as start:end hour indices")
    p_cal.add_argument("--n-pts", type=int, help="grid points for --gt-adjust")
    p_cal.add_argument("--max-cycles", type=int,
                       help="equilibrium cycle budget for --gt-adjust")

    p_det = sub.add_parser("detect", help="classify hours truthful vs strategic")
    common(p_det)
    p_det.add_argument("--truthful", help="truthful-model prices CSV")
    p_det.add_argument("--strategic", help="strategic-model prices CSV")
    p_det.add_argument("--targets", help="observed prices CSV")
    p_det.add_argument("--confidence", type=float, help="CI mass (default 0.975)")
    return parser


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, config file, and explicit flags (flags win)."""
    options = dict(defaults)
    options.update(_load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "mode") or value is None:
            continue
        options[key.replace("-", "_")] = value
    options["mode"] = args.mode
    missing = [k for k, v in options.items() if v is None]
    if missing:
        raise dataio.DataError("missing required options: " + ", ".join(sorted(missing)))
    return options


def _ensure_out(options: dict) -> str:
    out = options["out"]
    os.makedirs(out, exist_ok=True)
    return out


def _load_instances(options: dict):
    dataset = dataio.load_dataset(options["dataset"])
    instances, labels, _ = dataio.build_hourly_instances(
        dataset, max_deviation=options["max_deviation"])
    if options.get("scales"):
        zones, slope, intercept = dataio.read_scales_csv(options["scales"])
        if tuple(zones) != tuple(dataset.zones):
            raise dataio.DataError("scales zones do not match dataset zones")
        instances = [MarketInstance(apply_scales(inst.players, slope, intercept),
                                    inst.zonal_demand, inst.network)
                     for inst in instances]
    return dataset, instances, labels


def _run_clear(options: dict) -> int:
    out = _ensure_out(options)
    dataset, instances, _ = _load_instances(options)
    prices = np.full((dataset.n_hours, len(dataset.zones)), np.nan)
    flags = []
    for t, instance in enumerate(instances):
        result = clear_market(instance, instance.truthful_profile())
        if result.optimal:
            prices[t] = result.prices
        if result.diagnostics:
            flags.append((dataset.timestamps[t].strftime(dataio.TIMESTAMP_FMT),
                          result.status, result.diagnostics))
    meta = _meta(options)
    dataio.write_prices_csv(os.path.join(out, "truthful_prices.csv"),
                            dataset.timestamps, dataset.zones, prices, meta)
    dataio.write_csv(os.path.join(out, "flags.csv"),
                     ["timestamp", "status", "detail"], flags, meta)
    return 0


def equilibrium_prices(instance: MarketInstance, config: nash.GridConfig):
    """Strategic-model zonal prices of one (already scaled) hour."""
    context = rss.build_context(instance)
    report = nash.find_equilibrium(instance, context, config)
    return report


def _grid_config(options: dict) -> nash.GridConfig:
    presolve = None
    if options.get("presolve_n_pts"):
        presolve = nash.GridConfig(n_pts=options["presolve_n_pts"],
                                   max_cycles=options["max_cycles"],
                                   schedule=options["schedule"])
    return nash.GridConfig(n_pts=options["n_pts"],
                           max_cycles=options["max_cycles"],
                           tol_ne=options["delta_ne"],
                           schedule=options["schedule"],
                           presolve=presolve)


def _run_nash(options: dict) -> int:
    out = _ensure_out(options)
    dataset, instances, _ = _load_instances(options)
    config = _grid_config(options)
    prices = np.full((dataset.n_hours, len(dataset.zones)), np.nan)
    report_rows = []
    trace_rows = []
    for t, instance in enumerate(instances):
        stamp = dataset.timestamps[t].strftime(dataio.TIMESTAMP_FMT)
        report = equilibrium_prices(instance, config)
        prices[t] = report.clearing.prices
        report_rows.append((stamp, report.converged, report.cycles_used,
                            report.stopped_by,
                            "" if report.epsilon is None else report.epsilon))
        for cycle, profile in enumerate(report.trace):
            for i in range(len(profile)):
                trace_rows.append((stamp, cycle, i, profile.slopes[i],
                                   profile.intercepts[i]))
    meta = _meta(options)
    dataio.write_prices_csv(os.path.join(out, "strategic_prices.csv"),
                            dataset.timestamps, dataset.zones, prices, meta)
    dataio.write_csv(os.path.join(out, "equilibrium_report.csv"),
                     ["timestamp", "converged", "cycles", "stopped_by", "epsilon"],
                     report_rows, meta)
    dataio.write_csv(os.path.join(out, "iteration_trace.csv"),
                     ["timestamp", "cycle", "player", "slope", "intercept"],
                     trace_rows, meta)
    return 0


# Cost structure of the six-player single-zone example market used by the
# synthetic experiment suite.
EXAMPLE_COST_SLOPES = np.array([2.65, 1.5, 2.0, 1.8, 2.2, 2.1])
EXAMPLE_COST_INTERCEPTS = np.array([0.5, 2.0, 1.0, 1.1, 0.6, 1.0])


def growth_experiment_instance(demand: float,
                               max_deviation: float = 0.6) -> MarketInstance:
    """Capacity- and network-constrained variant of the example market.

    Consecutive player pairs go to three zones linked by two exchange
    lines; capacities and flow margins are generous enough that the
    constraints stay feasible across the multiplier sweep.
    """
    n = EXAMPLE_COST_SLOPES.shape[0]
    demand_z = np.full(3, demand / 3.0)
    players = tuple(
        Player(id=i, zone=i // 2,
               cost_slope=float(EXAMPLE_COST_SLOPES[i]),
               cost_intercept=float(EXAMPLE_COST_INTERCEPTS[i]),
               capacity=demand)
        for i in range(n))
    ptdf = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    margin = 0.5 * demand
    network = assemble_polytope(ptdf, [-margin, -margin], [margin, margin],
                                demand_z, max_deviation)
    return MarketInstance(players, demand_z, network)


def _run_synthetic(options: dict) -> int:
    out = _ensure_out(options)
    meta = _meta(options)
    figure = options["figure"]
    if figure == 4:
        result = simplified.price_ratio_experiment(
            n_samples=options["samples"], n_players=options["players"],
            demand=options["demand"], cost_slope_range=(1.0, 10.0),
            cost_intercept_range=(0.5, 2.0), seed=options["seed"])
        rows = [(s, result.truthful_prices[s], result.strategic_prices[s],
                 result.ratios[s]) for s in range(options["samples"])]
        dataio.write_csv(os.path.join(out, "figure4_price_ratios.csv"),
                         ["sample", "truthful_price", "strategic_price", "ratio"],
                         rows, meta)
        dataio.write_csv(os.path.join(out, "figure4_summary.csv"),
                         ["mean_ratio", "fraction_above_one"],
                         [(result.mean, result.fraction_above_one)], meta)
    elif figure == 5:
        demand = options["demand"]
        c = EXAMPLE_COST_SLOPES
        b = EXAMPLE_COST_INTERCEPTS
        intercept_eq = simplified.equilibrium_intercepts(c, b, c, demand)
        n_grid = options["grid_points"]
        slopes0 = np.linspace(0.25 * c[0], 2.5 * c[0], n_grid)
        intercepts0 = np.linspace(0.0, 3.0 * max(intercept_eq), n_grid)
        rows = []
        for m0 in slopes0:
            for a0 in intercepts0:
                slopes = c.copy().astype(float)
                intercepts = intercept_eq.copy()
                slopes[0] = m0
                intercepts[0] = a0
                sol = simplified.clear_arrays(slopes, intercepts, demand)
                x0 = sol.x[0]
                profit = sol.price * x0 - 0.5 * c[0] * x0 ** 2 - b[0] * x0
                rows.append((m0, a0, profit))
        dataio.write_csv(os.path.join(out, "figure5_profit_landscape.csv"),
                         ["slope", "intercept", "profit"], rows, meta)
    else:
        multipliers = np.linspace(1.0, options["k_max"], options["grid_points"])
        constrained = growth_experiment_instance(options["demand"])
        result = simplified.price_growth_experiment(
            EXAMPLE_COST_SLOPES, EXAMPLE_COST_INTERCEPTS, options["demand"],
            multipliers, perturb_fraction=options["perturb"],
            constrained=constrained)
        rows = [(multipliers[j], result.base_prices[j],
                 result.perturbed_prices[j], result.constrained_prices[j])
                for j in range(multipliers.shape[0])]
        dataio.write_csv(os.path.join(out, "figure6_price_growth.csv"),
                         ["multiplier", "price", "perturbed_price",
                          "constrained_price"], rows, meta)
    return 0


def _parse_subset(spec: str, n_hours: int):
    try:
        start, end = spec.split(":")
        start, end = int(start), int(end)
    except ValueError as exc:
        raise dataio.DataError(f"bad --gt-hours {spec!r}; expected start:end") from exc
    return range(max(0, start), min(n_hours, end))


def _run_calibrate(options: dict) -> int:
    out = _ensure_out(options)
    dataset, instances, _ = _load_instances(options)
    ts_targets, zones_t, targets = dataio.read_prices_csv(options["targets"])
    if tuple(zones_t) != tuple(dataset.zones) or ts_targets != dataset.timestamps:
        raise dataio.DataError("targets CSV does not align with dataset hours/zones")
    problem = calibration.CalibrationProblem(tuple(instances), targets)
    fit = calibration.fit_truthful_scales(problem, max_iters=options["max_iters"])
    meta = _meta(options)
    dataio.write_scales_csv(os.path.join(out, "truthful_scales.csv"), dataset.zones,
                            fit.scales.slope, fit.scales.intercept, meta)
    dataio.write_csv(os.path.join(out, "calibration_trace.csv"),
                     ["iteration", "objective", "step"],
                     fit.trace, meta)
    if options.get("gt_adjust"):
        config = nash.GridConfig(n_pts=options["n_pts"],
                                 max_cycles=options["max_cycles"])
        subset = _parse_subset(options["gt_hours"], dataset.n_hours)

        def strategic_prices(instance):
            return equilibrium_prices(instance, config).clearing.prices

        adjusted = calibration.ratio_adjust_scales(problem, fit.scales, subset,
                                                   strategic_prices)
        dataio.write_scales_csv(os.path.join(out, "strategic_scales.csv"),
                                dataset.zones, adjusted.slope, adjusted.intercept,
                                meta)
    return 0


def _run_detect(options: dict) -> int:
    out = _ensure_out(options)
    ts_tb, zones, truthful = dataio.read_prices_csv(options["truthful"])
    ts_gt, zones_gt, strategic = dataio.read_prices_csv(options["strategic"])
    ts_p, zones_p, targets = dataio.read_prices_csv(options["targets"])
    if not (zones == zones_gt == zones_p) or not (ts_tb == ts_gt == ts_p):
        raise detection.DetectionError("price CSVs are not aligned")
    series = detection.run_state_detection(truthful, strategic, targets,
                                           confidence=options["confidence"])
    meta = _meta(options)
    state_rows = []
    for t, ts in enumerate(ts_tb):
        row = [ts.strftime(dataio.TIMESTAMP_FMT)]
        for z in range(len(zones)):
            row.append(MarketState(series.zone_states[z, t]).name)
            row.append(series.regions[z, t])
        row.append(MarketState(series.aggregate[t]).name)
        state_rows.append(row)
    header = ["timestamp"]
    for zone in zones:
        header += [f"state_{zone}", f"region_{zone}"]
    header.append("aggregate")
    dataio.write_csv(os.path.join(out, "states.csv"), header, state_rows, meta)
    start_hour = ts_tb[0].hour
    profile = detection.hour_of_day_profile(series, start_hour=start_hour)
    profile_rows = []
    zone_names = list(zones) + ["ALL"]
    for zi, zone in enumerate(zone_names):
        for hod in range(24):
            for state in MarketState:
                profile_rows.append((zone, hod, state.name,
                                     int(profile[zi, hod, int(state)])))
    dataio.write_csv(os.path.join(out, "state_profile.csv"),
                     ["zone", "hour_of_day", "state", "count"],
                     profile_rows, meta)
    return 0


DEFAULTS = {
    "clear": {"out": "out", "seed": 0, "dataset": None, "scales": "",
              "max_deviation": 0.6},
    "nash": {"out": "out", "seed": 0, "dataset": None, "scales": "",
             "max_deviation": 0.6, "n_pts": 11, "max_cycles": 50,
             "delta_ne": 0.0, "schedule": "jacobi", "presolve_n_pts": 0},
    "synthetic": {"out": "out", "seed": 0, "figure": None, "samples": 10000,
                  "players": 5, "demand": None, "grid_points": 40,
                  "k_max": 10.0, "perturb": 0.05},
    "calibrate": {"out": "out", "seed": 0, "dataset": None, "targets": None,
                  "max_deviation": 0.6, "max_iters": 200, "gt_adjust": False,
                  "gt_hours": "0:24", "n_pts": 5, "max_cycles": 20},
    "detect": {"out": "out", "seed": 0, "truthful": None, "strategic": None,
               "targets": None, "confidence": 0.975},
}

# Demand default differs per synthetic figure: figure 4 uses the unit-demand
# sampling setup, figures 5 and 6 the six-player example market.
SYNTHETIC_DEMAND_DEFAULTS = {4: 1.0, 5: 6.0, 6: 6.0}

RUNNERS = {"clear": _run_clear, "nash": _run_nash, "synthetic": _run_synthetic,
           "calibrate": _run_calibrate, "detect": _run_detect}


def run(options: dict) -> int:
    """Execute one resolved configuration; returns the process exit code."""
    return RUNNERS[options["mode"]](options)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        defaults = dict(DEFAULTS[args.mode])
        if args.mode == "synthetic" and args.figure is not None and \
                defaults.get("demand") is None:
            defaults["demand"] = SYNTHETIC_DEMAND_DEFAULTS[args.figure]
        options = _resolve(args, defaults)
        return run(options)
    except (dataio.DataError, MarketInputError, detection.DetectionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except (calibration.CalibrationError, QpSolverFailure, nash.NashSearchError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
