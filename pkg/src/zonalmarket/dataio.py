"""CSV input/output and hourly instance assembly.

All files are plain CSV with a header row; output files carry leading
``#``-comment metadata lines (config hash, seed) which every reader
skips.  Timestamps are ISO-8601 at hourly resolution and must be
contiguous.  Daily fuel-price files (date column) are expanded to hourly
by constant fill within each day.

Dataset directory layout (fixed file names):
    demand.csv       timestamp, <zone>...           MWh per zone and hour
    fuel_prices.csv  date, <series>...              daily price series
    types.csv        type, markup, anchor_fraction, price_constant,
                     price_series, price_unit
    capacities.csv   zone, type, mw                 installed capacity
    forecasts.csv    timestamp, <zone>.<type>...    available capacity (MW)
    network.csv      timestamp, row, ptdf_<zone>..., ram_lower, ram_upper
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .clearing import MarketInstance, Player, assemble_polytope
from .costs import (DEFAULT_COVERAGE_THRESHOLD, DEFAULT_MIN_PLAYERS,
                    TypeParams, cost_from_reference_price, select_players)

TIMESTAMP_FMT = "%Y-%m-%dT%H:%M:%S"
DATE_FMT = "%Y-%m-%d"

# Coal series conversion, applied at ingestion for price_unit = usd_ton.
USD_TO_EUR = 0.89
MWH_PER_TON = 20.0 / 11.0

DATASET_FILES = ("demand.csv", "fuel_prices.csv", "types.csv",
                 "capacities.csv", "forecasts.csv", "network.csv")


class DataError(ValueError):
    """Schema violation, gap, or unit problem in an input file."""


@dataclass(frozen=True)
class HourlyNetwork:
    ptdf: np.ndarray
    ram_lower: np.ndarray
    ram_upper: np.ndarray


@dataclass
class HourlyDataset:
    """Validated hourly inputs for the clearing pipeline."""

    timestamps: list
    zones: tuple
    demand: np.ndarray            # (n_hours, n_zones)
    fuel_prices: dict             # series -> (n_hours,) EUR/MWh, DTH-expanded
    type_params: dict             # type name -> TypeParams
    installed: dict               # zone -> list[(type, mw)]
    forecasts: dict               # (zone, type) -> (n_hours,) MW
    network: list                 # per hour: HourlyNetwork | None

    @property
    def n_hours(self) -> int:
        return len(self.timestamps)


def _read_rows(path: str):
    if not os.path.exists(path):
        raise DataError(f"missing input file: {path}")
    with open(path, newline="") as handle:
        filtered = (line for line in handle if not line.startswith("#"))
        reader = csv.reader(filtered)
        rows = [row for row in rows_iter(reader)]
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows


def rows_iter(reader):
    for row in reader:
        if row and any(cell.strip() for cell in row):
            yield [cell.strip() for cell in row]


def _parse_float(path: str, row_no: int, cell: str, what: str) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise DataError(f"{path}: row {row_no}: bad {what} value {cell!r}") from exc


def _parse_timestamps(path: str, cells, fmt: str):
    out = []
    for row_no, cell in cells:
        try:
            out.append(datetime.strptime(cell, fmt))
        except ValueError as exc:
            raise DataError(f"{path}: row {row_no}: bad timestamp {cell!r}") from exc
    return out


def _check_contiguous(path: str, timestamps) -> None:
    gaps = []
    for prev, cur in zip(timestamps, timestamps[1:]):
        expected = prev + timedelta(hours=1)
        if cur != expected:
            gaps.append(f"{expected.strftime(TIMESTAMP_FMT)} (after "
                        f"{prev.strftime(TIMESTAMP_FMT)})")
    if gaps:
        raise DataError(f"{path}: missing hours: " + "; ".join(gaps[:10]))


def read_matrix_csv(path: str):
    """Read a timestamp-indexed matrix CSV: header ``timestamp,<col>...``.

    Returns (timestamps, column names, float matrix).  Comment lines are
    skipped; hours must be contiguous.
    """
    rows = _read_rows(path)
    header = rows[0]
    if not header or header[0] != "timestamp":
        raise DataError(f"{path}: first column must be 'timestamp'")
    columns = tuple(header[1:])
    if not columns:
        raise DataError(f"{path}: no data columns")
    body = rows[1:]
    timestamps = _parse_timestamps(path, [(i + 2, r[0]) for i, r in enumerate(body)],
                                   TIMESTAMP_FMT)
    _check_contiguous(path, timestamps)
    matrix = np.empty((len(body), len(columns)))
    for i, row in enumerate(body):
        if len(row) != len(columns) + 1:
            raise DataError(f"{path}: row {i + 2}: expected {len(columns) + 1} cells")
        for j, cell in enumerate(row[1:]):
            matrix[i, j] = _parse_float(path, i + 2, cell, columns[j])
    return timestamps, columns, matrix


def _read_daily_series(path: str):
    rows = _read_rows(path)
    header = rows[0]
    if not header or header[0] != "date":
        raise DataError(f"{path}: first column must be 'date'")
    columns = tuple(header[1:])
    body = rows[1:]
    dates = _parse_timestamps(path, [(i + 2, r[0]) for i, r in enumerate(body)],
                              DATE_FMT)
    values = {}
    for i, row in enumerate(body):
        if len(row) != len(columns) + 1:
            raise DataError(f"{path}: row {i + 2}: expected {len(columns) + 1} cells")
        values[dates[i].date()] = [
            _parse_float(path, i + 2, cell, columns[j])
            for j, cell in enumerate(row[1:])]
    return columns, values


def _read_types(path: str) -> dict:
    rows = _read_rows(path)
    header = rows[0]
    expected = ["type", "markup", "anchor_fraction", "price_constant",
                "price_series", "price_unit"]
    if header != expected:
        raise DataError(f"{path}: header must be {','.join(expected)}")
    params = {}
    units = {}
    for i, row in enumerate(rows[1:]):
        if len(row) != len(expected):
            raise DataError(f"{path}: row {i + 2}: expected {len(expected)} cells")
        name = row[0]
        constant = None if row[3] == "" else _parse_float(path, i + 2, row[3], "price_constant")
        series = None if row[4] == "" else row[4]
        unit = row[5] or "eur_mwh"
        if unit not in ("eur_mwh", "usd_ton"):
            raise DataError(f"{path}: row {i + 2}: unknown price unit {unit!r}")
        params[name] = TypeParams(
            name=name,
            markup=_parse_float(path, i + 2, row[1], "markup"),
            anchor_fraction=_parse_float(path, i + 2, row[2], "anchor_fraction"),
            price_constant=constant,
            price_series=series,
        )
        units[name] = unit
    return {"params": params, "units": units}


def _read_capacities(path: str) -> dict:
    rows = _read_rows(path)
    if rows[0] != ["zone", "type", "mw"]:
        raise DataError(f"{path}: header must be zone,type,mw")
    installed: dict = {}
    for i, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise DataError(f"{path}: row {i + 2}: expected 3 cells")
        mw = _parse_float(path, i + 2, row[2], "mw")
        if mw < 0.0:
            raise DataError(f"{path}: row {i + 2}: negative capacity {mw}")
        installed.setdefault(row[0], []).append((row[1], mw))
    return installed


def _read_network(path: str, zones, timestamps) -> list:
    rows = _read_rows(path)
    header = rows[0]
    expected = ["timestamp", "row"] + [f"ptdf_{z}" for z in zones] + ["ram_lower", "ram_upper"]
    if header != expected:
        raise DataError(f"{path}: header must be {','.join(expected)}")
    index = {ts: t for t, ts in enumerate(timestamps)}
    per_hour: list = [[] for _ in timestamps]
    for i, row in enumerate(rows[1:]):
        if len(row) != len(expected):
            raise DataError(f"{path}: row {i + 2}: expected {len(expected)} cells")
        try:
            ts = datetime.strptime(row[0], TIMESTAMP_FMT)
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 2}: bad timestamp {row[0]!r}") from exc
        if ts not in index:
            raise DataError(f"{path}: row {i + 2}: timestamp outside demand range")
        ptdf = [_parse_float(path, i + 2, cell, "ptdf") for cell in row[2:2 + len(zones)]]
        lower = _parse_float(path, i + 2, row[-2], "ram_lower")
        upper = _parse_float(path, i + 2, row[-1], "ram_upper")
        if lower > upper:
            raise DataError(f"{path}: row {i + 2}: ram_lower exceeds ram_upper")
        per_hour[index[ts]].append((ptdf, lower, upper))
    out: list = []
    for entries in per_hour:
        if not entries:
            out.append(None)
            continue
        ptdf = np.array([e[0] for e in entries])
        out.append(HourlyNetwork(ptdf=ptdf,
                                 ram_lower=np.array([e[1] for e in entries]),
                                 ram_upper=np.array([e[2] for e in entries])))
    return out


def _expand_daily(path: str, columns, daily_values, timestamps) -> dict:
    series = {name: np.empty(len(timestamps)) for name in columns}
    for t, ts in enumerate(timestamps):
        day = ts.date()
        if day not in daily_values:
            raise DataError(f"{path}: no value for {day.isoformat()}")
        for j, name in enumerate(columns):
            series[name][t] = daily_values[day][j]
    return series


def load_dataset(directory: str) -> HourlyDataset:
    """Load and validate a dataset directory (see module docstring)."""
    paths = {name: os.path.join(directory, name) for name in DATASET_FILES}
    timestamps, zones, demand = read_matrix_csv(paths["demand.csv"])
    if np.any(demand < 0.0):
        raise DataError(f"{paths['demand.csv']}: negative demand entry")
    fuel_cols, fuel_daily = _read_daily_series(paths["fuel_prices.csv"])
    fuel = _expand_daily(paths["fuel_prices.csv"], fuel_cols, fuel_daily, timestamps)
    types = _read_types(paths["types.csv"])
    for name, unit in types["units"].items():
        params = types["params"][name]
        if unit == "usd_ton":
            if params.price_series is not None:
                fuel_key = params.price_series
                if fuel_key not in fuel:
                    raise DataError(f"type {name}: unknown fuel series {fuel_key!r}")
                fuel[fuel_key] = fuel[fuel_key] * USD_TO_EUR / MWH_PER_TON
            # constant prices are already EUR/MWh by schema
    installed = _read_capacities(paths["capacities.csv"])
    for zone in installed:
        if zone not in zones:
            raise DataError(f"capacities.csv: unknown zone {zone!r}")
    fc_timestamps, fc_columns, fc_matrix = read_matrix_csv(paths["forecasts.csv"])
    if fc_timestamps != timestamps:
        raise DataError("forecasts.csv: timestamps do not match demand.csv")
    forecasts = {}
    for j, col in enumerate(fc_columns):
        if "." not in col:
            raise DataError(f"forecasts.csv: column {col!r} must be <zone>.<type>")
        zone, type_name = col.split(".", 1)
        if zone not in zones:
            raise DataError(f"forecasts.csv: unknown zone {zone!r}")
        if np.any(fc_matrix[:, j] < 0.0):
            raise DataError(f"forecasts.csv: negative capacity in column {col!r}")
        forecasts[(zone, type_name)] = fc_matrix[:, j]
    network = _read_network(paths["network.csv"], zones, timestamps)
    missing_series = [t for t in types["params"].values()
                      if t.price_series is not None and t.price_series not in fuel]
    if missing_series:
        names = ", ".join(t.name for t in missing_series)
        raise DataError(f"types.csv: fuel series missing for: {names}")
    return HourlyDataset(timestamps=timestamps, zones=zones, demand=demand,
                         fuel_prices=fuel, type_params=types["params"],
                         installed=installed, forecasts=forecasts,
                         network=network)


@dataclass(frozen=True)
class PlayerKey:
    zone: str
    type: str


def build_hourly_instances(dataset: HourlyDataset,
                           coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD,
                           min_players: int = DEFAULT_MIN_PLAYERS,
                           max_deviation: float = 0.6):
    """Construct one MarketInstance per hour plus stable player labels.

    The player set is fixed from installed capacities (thresholding +
    merging per zone); per hour, renewables draw their available capacity
    from the forecast columns and a player with zero capacity that hour is
    left out of the instance.  Returns (instances, labels, presence) where
    ``presence[t]`` maps instance player index -> label index.
    """
    zone_index = {z: i for i, z in enumerate(dataset.zones)}
    labels: list[PlayerKey] = []
    for zone in dataset.zones:
        selection = select_players(zone, dataset.installed.get(zone, ()),
                                   threshold=coverage_threshold,
                                   min_players=min_players)
        retained = sorted(selection.retained, key=lambda tc: (-tc[1], tc[0]))
        for type_name, _ in retained:
            if type_name not in dataset.type_params:
                raise DataError(f"types.csv: no parameters for type {type_name!r}")
            labels.append(PlayerKey(zone=zone, type=type_name))
    installed_caps = {
        (zone, merge_t): cap
        for zone in dataset.zones
        for merge_t, cap in sorted(
            select_players(zone, dataset.installed.get(zone, ()),
                           threshold=coverage_threshold,
                           min_players=min_players).retained,
            key=lambda tc: (-tc[1], tc[0]))
    }
    instances = []
    presence = []
    for t in range(dataset.n_hours):
        players = []
        present = []
        for label_idx, key in enumerate(labels):
            params = dataset.type_params[key.type]
            forecast = dataset.forecasts.get((key.zone, key.type))
            capacity = float(forecast[t]) if forecast is not None \
                else installed_caps[(key.zone, key.type)]
            if capacity <= 0.0:
                continue
            if params.price_constant is not None:
                reference = params.price_constant
            else:
                reference = float(dataset.fuel_prices[params.price_series][t])
            slope, intercept = cost_from_reference_price(
                reference, params.markup, params.anchor_fraction, capacity)
            players.append(Player(id=len(players), zone=zone_index[key.zone],
                                  cost_slope=slope, cost_intercept=intercept,
                                  capacity=capacity))
            present.append(label_idx)
        net = dataset.network[t]
        polytope = None
        if net is not None:
            polytope = assemble_polytope(net.ptdf, net.ram_lower, net.ram_upper,
                                         dataset.demand[t], max_deviation)
        instances.append(MarketInstance(tuple(players), dataset.demand[t], polytope))
        presence.append(tuple(present))
    return instances, tuple(labels), presence


# ---------------------------------------------------------------------------
# Writers and readers for result files
# ---------------------------------------------------------------------------


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, header, rows, meta: dict | None = None) -> None:
    """Write a CSV with ``# key=value`` metadata comment lines up front."""
    buffer = io.StringIO()
    for key in sorted(meta or {}):
        buffer.write(f"# {key}={meta[key]}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format(cell) for cell in row])
    with open(path, "w", newline="") as handle:
        handle.write(buffer.getvalue())


def read_meta(path: str) -> dict:
    meta = {}
    with open(path) as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
    return meta


def write_prices_csv(path: str, timestamps, zones, prices: np.ndarray,
                     meta: dict | None = None) -> None:
    rows = [[ts.strftime(TIMESTAMP_FMT)] + list(prices[t])
            for t, ts in enumerate(timestamps)]
    write_csv(path, ["timestamp"] + list(zones), rows, meta)


def read_prices_csv(path: str):
    return read_matrix_csv(path)


def write_scales_csv(path: str, zones, slope_scales, intercept_scales,
                     meta: dict | None = None) -> None:
    rows = [[zone, slope_scales[i], intercept_scales[i]]
            for i, zone in enumerate(zones)]
    write_csv(path, ["zone", "slope_scale", "intercept_scale"], rows, meta)


def read_scales_csv(path: str):
    rows = _read_rows(path)
    if rows[0] != ["zone", "slope_scale", "intercept_scale"]:
        raise DataError(f"{path}: header must be zone,slope_scale,intercept_scale")
    zones = []
    slope = []
    intercept = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise DataError(f"{path}: row {i + 2}: expected 3 cells")
        zones.append(row[0])
        slope.append(_parse_float(path, i + 2, row[1], "slope_scale"))
        intercept.append(_parse_float(path, i + 2, row[2], "intercept_scale"))
    return tuple(zones), np.array(slope), np.array(intercept)
