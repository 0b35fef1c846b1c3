#!/usr/bin/env python3
"""Generate a small synthetic dataset directory for demos and smoke runs.

Two zones (DE, FR) over a configurable number of hours, with fuel-price
series, installed capacities covering the merge groups, renewable
forecasts, and one exchange line.  Also writes a target-price file
(scaled truthful-model prices plus noise) usable by ``calibrate`` and
``detect``.

Usage:
    python scripts/make_fixture.py --out fixtures/demo --hours 48 --seed 0
"""

import argparse
import csv
import os
from datetime import datetime, timedelta

import numpy as np

START = datetime(2019, 1, 2, 0, 0, 0)
ZONES = ("DE", "FR")


def _write(path, header, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_dataset(directory, n_hours=48, seed=0):
    os.makedirs(directory, exist_ok=True)
    rng = np.random.default_rng(seed)
    stamps = [START + timedelta(hours=t) for t in range(n_hours)]
    iso = [s.strftime("%Y-%m-%dT%H:%M:%S") for s in stamps]

    hod = np.array([s.hour for s in stamps])
    demand_de = 110.0 + 25.0 * np.sin((hod - 6) * np.pi / 12.0) + rng.normal(0, 2, n_hours)
    demand_fr = 85.0 + 18.0 * np.sin((hod - 7) * np.pi / 12.0) + rng.normal(0, 2, n_hours)
    _write(os.path.join(directory, "demand.csv"), ["timestamp"] + list(ZONES),
           [[iso[t], round(float(demand_de[t]), 3), round(float(demand_fr[t]), 3)]
            for t in range(n_hours)])

    days = sorted({s.date() for s in stamps})
    _write(os.path.join(directory, "fuel_prices.csv"),
           ["date", "gas", "coal_usd_ton", "hydro_storage"],
           [[d.isoformat(),
             round(float(20.0 + 1.5 * i + rng.normal(0, 0.4)), 3),
             round(float(70.0 + 2.0 * i + rng.normal(0, 1.0)), 3),
             round(float(42.0 + rng.normal(0, 1.0)), 3)]
            for i, d in enumerate(days)])

    _write(os.path.join(directory, "types.csv"),
           ["type", "markup", "anchor_fraction", "price_constant",
            "price_series", "price_unit"],
           [["gas", 0.2, 0.5, "", "gas", "eur_mwh"],
            ["coal", 0.4, 0.5, "", "coal_usd_ton", "usd_ton"],
            ["nuclear", 0.8, 0.5, 13.8, "", "eur_mwh"],
            ["wind", 0.05, 0.5, 0.5, "", "eur_mwh"],
            ["solar", 0.05, 0.5, 0.5, "", "eur_mwh"],
            ["hydro_storage", 0.2, 0.5, "", "hydro_storage", "eur_mwh"],
            ["hydro_run_of_river", 0.1, 0.5, 8.45, "", "eur_mwh"]])

    _write(os.path.join(directory, "capacities.csv"), ["zone", "type", "mw"],
           [["DE", "gas", 60.0], ["DE", "hard_coal", 45.0],
            ["DE", "brown_coal", 25.0], ["DE", "nuclear", 40.0],
            ["DE", "wind_onshore", 35.0], ["DE", "wind_offshore", 15.0],
            ["DE", "solar", 30.0], ["DE", "hydro_run_of_river", 6.0],
            ["FR", "nuclear", 70.0], ["FR", "gas", 30.0],
            ["FR", "hydro_pumped_storage", 15.0],
            ["FR", "hydro_water_reservoir", 12.0],
            ["FR", "wind_onshore", 18.0], ["FR", "solar", 14.0],
            ["FR", "hydro_run_of_river", 9.0]])

    wind_de = np.clip(25.0 + 12.0 * rng.standard_normal(n_hours), 2.0, 50.0)
    solar_de = np.clip(28.0 * np.maximum(0.0, np.sin((hod - 6) * np.pi / 12.0))
                       + rng.normal(0, 1, n_hours), 0.5, None)
    wind_fr = np.clip(10.0 + 5.0 * rng.standard_normal(n_hours), 1.0, 18.0)
    solar_fr = np.clip(12.0 * np.maximum(0.0, np.sin((hod - 6) * np.pi / 12.0))
                       + rng.normal(0, 0.5, n_hours), 0.5, None)
    _write(os.path.join(directory, "forecasts.csv"),
           ["timestamp", "DE.wind", "DE.solar", "FR.wind", "FR.solar"],
           [[iso[t], round(float(wind_de[t]), 3), round(float(solar_de[t]), 3),
             round(float(wind_fr[t]), 3), round(float(solar_fr[t]), 3)]
            for t in range(n_hours)])

    _write(os.path.join(directory, "network.csv"),
           ["timestamp", "row", "ptdf_DE", "ptdf_FR", "ram_lower", "ram_upper"],
           [[iso[t], "DE-FR", 0.5, -0.5, -25.0, 25.0] for t in range(n_hours)])
    return directory


def write_targets(directory, dataset_dir, seed=0, scale=1.25, noise=1.5):
    """Target prices: scaled truthful-model prices plus Gaussian noise."""
    from zonalmarket import dataio
    from zonalmarket.clearing import clear_market

    rng = np.random.default_rng(seed + 1)
    dataset = dataio.load_dataset(dataset_dir)
    instances, _, _ = dataio.build_hourly_instances(dataset)
    prices = []
    for instance in instances:
        result = clear_market(instance, instance.truthful_profile())
        prices.append(result.prices)
    prices = np.asarray(prices) * scale + rng.normal(0, noise, (len(instances), 2))
    path = os.path.join(directory, "target_prices.csv")
    dataio.write_prices_csv(path, dataset.timestamps, dataset.zones, prices)
    return path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures/demo")
    parser.add_argument("--hours", type=int, default=48)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    write_dataset(args.out, n_hours=args.hours, seed=args.seed)
    write_targets(args.out, args.out, seed=args.seed)
    print(f"dataset written to {args.out}")


if __name__ == "__main__":
    main()
