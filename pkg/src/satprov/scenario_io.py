"""Scenario files: a JSON document plus a traffic CSV next to it."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .constellation import ShellConfig, build_constellation, propagate
from .env import Scenario, make_scenario
from .netmodel import Allocation, EvalParams, senior_of
from .traffic import load_traffic_csv, save_traffic_csv

SCENARIO_SCHEMA = 1


def save_scenario(scenario: Scenario, shells, path) -> Path:
    """Write <path> (JSON) and <stem>_traffic.csv beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    leo, meo = shells
    traffic_name = path.stem + "_traffic.csv"
    save_traffic_csv(scenario.traffic, path.parent / traffic_name)
    doc = {
        "schema": SCENARIO_SCHEMA,
        "scenario_id": scenario.scenario_id,
        "leo": leo.to_dict(),
        "meo": meo.to_dict(),
        "slot": scenario.snapshot.slot,
        "slot_duration_s": scenario.snapshot.slot_duration_s,
        "sync_unit": scenario.traffic.sync_unit,
        "traffic_csv": traffic_name,
        "eval": asdict(scenario.params),
        "allocation": scenario.initial_allocation.to_dict(),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def load_scenario(path, params: EvalParams | None = None) -> Scenario:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema") != SCENARIO_SCHEMA:
        raise ValueError(f"{path}: unsupported scenario schema {doc.get('schema')!r}")
    leo, meo = ShellConfig(**doc["leo"]), ShellConfig(**doc["meo"])
    snapshot = propagate(build_constellation(leo, meo), doc["slot"], doc["slot_duration_s"])
    traffic = load_traffic_csv(path.parent / doc["traffic_csv"], snapshot.n_leo, doc["sync_unit"])
    alloc = Allocation.from_dict(doc["allocation"])
    params = params or EvalParams(**doc.get("eval", {}))
    return make_scenario(snapshot, traffic, alloc, params, doc.get("scenario_id", path.stem))


def load_allocation(path, scenario: Scenario) -> Allocation:
    """A JSON allocation: a bare controller list or {"controller_of": [...], "senior": s}."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        doc = {"controller_of": doc}
    if not isinstance(doc, dict) or "controller_of" not in doc:
        raise ValueError(f"{path}: expected a controller list or an object with controller_of")
    senior = doc.get("senior", senior_of(scenario.snapshot))
    c = np.asarray(doc["controller_of"], dtype=np.int64)
    if c.shape != (scenario.n_leo,):
        raise ValueError(f"{path}: allocation has {c.size} entries, scenario has {scenario.n_leo} LEOs")
    return Allocation(c, int(senior), scenario.n_meo)
