from __future__ import annotations

import numpy as np
import pytest

from passsight.fixtures import flat_network, hill_curve_network
from passsight.road import RoadRoute, RoadStation
from passsight.visibility import VisibilityTable, precompute_visibility

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def hill_curve():
    return hill_curve_network()


@pytest.fixture(scope="session")
def hill_curve_table(hill_curve):
    route, dsm = hill_curve
    return precompute_visibility(dsm, route)


@pytest.fixture(scope="session")
def flat():
    return flat_network(length=200.0, interval=10.0)


def straight(length=2000.0, interval=10.0, limit=100.0, lanes=1, intersections=(), grade=0.0):
    """Straight route along +x with per-station attributes given as scalars or callables."""
    n = int(round(length / interval))
    stations = []
    for i in range(n + 1):
        s = i * interval
        stations.append(RoadStation(
            s=s, position=(s, 0.0, grade * s), heading=(1.0, 0.0, 0.0), grade=grade,
            lanes_per_direction=lanes(s) if callable(lanes) else lanes,
            speed_limit=limit(s) if callable(limit) else limit,
            opposite_lane_offset=(0.0, 1.75, 0.0),
        ))
    return RoadRoute(tuple(stations), tuple(intersections), "straight")


def const_table(route, value, interval=10.0, truncated=None):
    s = np.arange(0.0, route.total_length + 1e-9, interval)
    d = value(s) if callable(value) else np.full(len(s), float(value))
    return VisibilityTable(route.route_id, interval, 10.0, 1200.0, s, d, truncated, route.total_length)
