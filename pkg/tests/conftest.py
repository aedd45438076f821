from pathlib import Path

import numpy as np
import pytest

from satprov.constellation import ConstellationSnapshot
from satprov.env import make_scenario, sample_scenario
from satprov.netmodel import Allocation
from satprov.traffic import TrafficScenario

DATA = Path(__file__).resolve().parents[1] / "src" / "satprov" / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"


def snapshot_from(leo_pos, meo_pos, slot=0):
    leo_pos = np.asarray(leo_pos, dtype=float).reshape(-1, 3)
    meo_pos = np.asarray(meo_pos, dtype=float).reshape(-1, 3)
    pos = np.vstack([leo_pos, meo_pos])
    meo_r = float(np.linalg.norm(meo_pos[0])) if len(meo_pos) else 0.0
    return ConstellationSnapshot(slot, 60.0, len(leo_pos), len(meo_pos), pos, meo_r)


def traffic_from(volume, flows=None, sync_unit=1.0):
    volume = np.asarray(volume, dtype=float)
    if flows is None:
        flows = (volume > 0).astype(np.int64)
    return TrafficScenario(volume, np.asarray(flows, dtype=np.int64), sync_unit)


def alloc(c, senior=0, n_meo=None):
    c = np.asarray(c, dtype=np.int64)
    return Allocation(c, senior, int(c.max()) + 1 if n_meo is None else n_meo)


@pytest.fixture(scope="session")
def small_scenarios():
    return [sample_scenario(4, 2, s) for s in range(5)]


@pytest.fixture(scope="session")
def scenario_8_3():
    return sample_scenario(8, 3, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


__all__ = ["DATA", "GOLDEN", "alloc", "make_scenario", "snapshot_from", "traffic_from"]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
