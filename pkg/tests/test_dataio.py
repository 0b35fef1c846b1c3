import numpy as np
import pytest

from zonalmarket import dataio
from zonalmarket.dataio import (DataError, build_hourly_instances,
                                load_dataset, read_meta, read_prices_csv,
                                read_scales_csv, write_prices_csv,
                                write_scales_csv)


@pytest.fixture
def dataset_dir(demo_dataset):
    return demo_dataset[0]


class TestLoadDataset:
    def test_loads_fixture(self, dataset_dir):
        dataset = load_dataset(str(dataset_dir))
        assert dataset.n_hours == 24
        assert dataset.zones == ("DE", "FR")
        assert dataset.demand.shape == (24, 2)
        assert set(dataset.fuel_prices) == {"gas", "coal_usd_ton", "hydro_storage"}

    def test_daily_series_constant_within_day(self, dataset_dir):
        dataset = load_dataset(str(dataset_dir))
        gas = dataset.fuel_prices["gas"]
        assert np.ptp(gas[:24]) == 0.0

    def test_coal_unit_conversion(self, dataset_dir):
        dataset = load_dataset(str(dataset_dir))
        raw_rows = (dataset_dir / "fuel_prices.csv").read_text().splitlines()
        first_usd = float(raw_rows[1].split(",")[2])
        expected = first_usd * dataio.USD_TO_EUR / dataio.MWH_PER_TON
        assert dataset.fuel_prices["coal_usd_ton"][0] == pytest.approx(expected)

    def test_missing_hour_reports_gap(self, dataset_dir):
        demand = dataset_dir / "demand.csv"
        lines = demand.read_text().splitlines()
        del lines[13]
        demand.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="missing hours"):
            load_dataset(str(dataset_dir))

    def test_negative_capacity_rejected(self, dataset_dir):
        caps = dataset_dir / "capacities.csv"
        text = caps.read_text().replace("60.0", "-60.0")
        caps.write_text(text)
        with pytest.raises(DataError, match="negative capacity"):
            load_dataset(str(dataset_dir))

    def test_missing_file_reported(self, tmp_path):
        with pytest.raises(DataError, match="missing input file"):
            load_dataset(str(tmp_path))

    def test_bad_float_reports_row(self, dataset_dir):
        demand = dataset_dir / "demand.csv"
        lines = demand.read_text().splitlines()
        cells = lines[3].split(",")
        cells[1] = "oops"
        lines[3] = ",".join(cells)
        demand.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="row 4"):
            load_dataset(str(dataset_dir))


class TestBuildInstances:
    def test_instances_per_hour(self, dataset_dir):
        dataset = load_dataset(str(dataset_dir))
        instances, labels, presence = build_hourly_instances(dataset)
        assert len(instances) == 24
        assert all(inst.n_zones == 2 for inst in instances)
        zones = {label.zone for label in labels}
        assert zones == {"DE", "FR"}
        merged_types = {label.type for label in labels}
        assert "wind" in merged_types  # onshore + offshore merged
        assert "coal" in merged_types

    def test_zero_forecast_drops_player(self, dataset_dir):
        forecasts = dataset_dir / "forecasts.csv"
        lines = forecasts.read_text().splitlines()
        header = lines[0].split(",")
        solar_col = header.index("DE.solar")
        cells = lines[1].split(",")
        cells[solar_col] = "0.0"
        lines[1] = ",".join(cells)
        forecasts.write_text("\n".join(lines) + "\n")
        dataset = load_dataset(str(dataset_dir))
        instances, labels, presence = build_hourly_instances(dataset)
        solar_idx = next(i for i, lab in enumerate(labels)
                         if lab.zone == "DE" and lab.type == "solar")
        assert solar_idx not in presence[0]
        assert solar_idx in presence[12]

    def test_all_hours_clear(self, dataset_dir):
        from zonalmarket.clearing import clear_market
        dataset = load_dataset(str(dataset_dir))
        instances, _, _ = build_hourly_instances(dataset)
        for instance in instances:
            result = clear_market(instance, instance.truthful_profile())
            assert result.optimal


class TestRoundTrip:
    def test_prices_roundtrip(self, tmp_path, dataset_dir):
        dataset = load_dataset(str(dataset_dir))
        rng = np.random.default_rng(0)
        prices = rng.uniform(10.0, 80.0, (dataset.n_hours, 2))
        path = tmp_path / "prices.csv"
        write_prices_csv(str(path), dataset.timestamps, dataset.zones, prices,
                         meta={"config_hash": "abc", "seed": 7})
        stamps, zones, matrix = read_prices_csv(str(path))
        assert stamps == dataset.timestamps
        assert zones == dataset.zones
        assert np.array_equal(matrix, prices)
        meta = read_meta(str(path))
        assert meta == {"config_hash": "abc", "seed": "7"}

    def test_scales_roundtrip(self, tmp_path):
        path = tmp_path / "scales.csv"
        write_scales_csv(str(path), ("DE", "FR"), np.array([1.25, 0.875]),
                         np.array([1.0, 2.5]), meta={"seed": 0})
        zones, slope, intercept = read_scales_csv(str(path))
        assert zones == ("DE", "FR")
        assert np.array_equal(slope, [1.25, 0.875])
        assert np.array_equal(intercept, [1.0, 2.5])
