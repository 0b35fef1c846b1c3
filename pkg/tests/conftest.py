import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))

import make_fixture  # noqa: E402

from zonalmarket.clearing import (MarketInstance, NetworkPolytope, Player,
                                  assemble_polytope)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def one_zone_pair():
    """Two symmetric players, one zone."""
    return MarketInstance(
        players=(Player(0, 0, 1.0, 0.0, 5.0), Player(1, 0, 1.0, 0.0, 5.0)),
        zonal_demand=[2.0])


@pytest.fixture
def two_zone_line():
    """Two zones joined by one exchange line that binds under truthful bids."""
    net = assemble_polytope(np.array([[1.0, -1.0]]), [-0.1], [0.1],
                            [1.0, 1.0], 0.6)
    return MarketInstance(
        players=(Player(0, 0, 1.0, 0.0, 10.0), Player(1, 1, 1.0, 0.5, 10.0)),
        zonal_demand=[1.0, 1.0], network=net)


@pytest.fixture
def duopoly_fixture():
    """Baseload + peaker in each of two zones; strategic play pays."""
    net = assemble_polytope(np.array([[1.0, -1.0]]), [-2.0], [2.0],
                            [10.0, 8.0], 0.6)
    players = (Player(0, 0, 0.2, 0.5, 9.0), Player(1, 0, 2.5, 6.0, 8.0),
               Player(2, 1, 0.3, 1.0, 7.0), Player(3, 1, 3.0, 7.0, 8.0))
    return MarketInstance(players, [10.0, 8.0], net)


def random_feasible_instance(rng, max_players=6, max_zones=3, with_network=True):
    """Random market instance that is feasible by construction.

    Zonal demand is set to the zonal sums of an interior allocation, so
    the polytope (zero net exports, slack flow margins) always admits it.
    """
    n = int(rng.integers(2, max_players + 1))
    n_zones = int(rng.integers(1, min(max_zones, n) + 1))
    zones = rng.integers(0, n_zones, n)
    zones[:n_zones] = np.arange(n_zones)  # every zone gets a player
    weights = rng.uniform(0.2, 1.0, n)
    total = float(rng.uniform(2.0, 20.0))
    base = total * weights / weights.sum()
    capacities = base * rng.uniform(1.5, 3.0, n)
    demand = np.zeros(n_zones)
    for i in range(n):
        demand[zones[i]] += base[i]
    players = tuple(
        Player(i, int(zones[i]), float(rng.uniform(0.2, 3.0)),
               float(rng.uniform(0.0, 3.0)), float(capacities[i]))
        for i in range(n))
    network = None
    if with_network and n_zones > 1 and rng.random() < 0.7:
        n_rows = int(rng.integers(1, 4))
        ptdf = rng.uniform(-1.0, 1.0, (n_rows, n_zones))
        margin = rng.uniform(0.3, 1.5, n_rows) * total
        network = assemble_polytope(ptdf, -margin, margin, demand, 0.6)
    return MarketInstance(players, demand, network)


@pytest.fixture
def demo_dataset(tmp_path):
    """Small on-disk dataset directory plus matching target prices."""
    directory = tmp_path / "dataset"
    make_fixture.write_dataset(str(directory), n_hours=24, seed=0)
    targets = make_fixture.write_targets(str(directory), str(directory), seed=0)
    return directory, targets
