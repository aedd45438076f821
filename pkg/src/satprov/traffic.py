"""Synthetic per-slot traffic between LEO satellites (gravity model)."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TrafficScenario:
    volume: np.ndarray = field(repr=False)  # (n_leo, n_leo) megabits
    flows: np.ndarray = field(repr=False)  # (n_leo, n_leo) integer flow counts
    sync_unit: float = 1.0  # Mb per managed node per slot

    def __post_init__(self):
        v, f = np.asarray(self.volume, dtype=float), np.asarray(self.flows, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape != f.shape:
            raise ValueError("volume and flows must be matching square matrices")
        if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(f < 0):
            raise ValueError("traffic entries must be finite and non-negative")
        if np.any(np.diag(v) != 0) or np.any(np.diag(f) != 0):
            raise ValueError("traffic diagonal must be zero")
        if np.any((v == 0) != (f == 0)):
            raise ValueError("volume and flow sparsity patterns differ")
        if not self.sync_unit > 0:
            raise ValueError("sync_unit must be positive")
        object.__setattr__(self, "volume", v)
        object.__setattr__(self, "flows", f)

    @property
    def n_leo(self) -> int:
        return self.volume.shape[0]


def generate_traffic(snapshot, n_flows: int, volume_scale: float = 1.0, seed=0, sync_unit: float = 1.0) -> TrafficScenario:
    """Sample `n_flows` flows between LEO pairs with probability proportional
    to w_i * w_j, where each satellite weight is log-uniform on [0.1, 10].
    Each flow carries an exponential volume with mean `volume_scale`.
    """
    if n_flows < 0:
        raise ValueError("n_flows must be >= 0")
    n = snapshot.n_leo if hasattr(snapshot, "n_leo") else int(snapshot)
    rng = np.random.default_rng(seed)
    volume = np.zeros((n, n))
    flows = np.zeros((n, n), dtype=np.int64)
    if n_flows == 0 or n < 2:
        return TrafficScenario(volume, flows, sync_unit)
    w = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
    p = np.outer(w, w)
    np.fill_diagonal(p, 0.0)
    p = p.ravel() / p.sum()
    pairs = rng.choice(n * n, size=n_flows, p=p)
    sizes = rng.exponential(volume_scale, size=n_flows)
    # an exact-zero exponential draw would break the flows/volume pattern
    sizes = np.maximum(sizes, np.finfo(float).tiny)
    volume = np.bincount(pairs, weights=sizes, minlength=n * n).reshape(n, n)
    flows = np.bincount(pairs, minlength=n * n).astype(np.int64).reshape(n, n)
    return TrafficScenario(volume, flows, sync_unit)


def sync_traffic(allocation, scenario: TrafficScenario, n_meo: int | None = None):
    """Per-controller sync volume (linear in domain size) and the senior's."""
    n_meo = allocation.n_meo if n_meo is None else n_meo
    sizes = np.bincount(allocation.controller_of, minlength=n_meo)
    return scenario.sync_unit * sizes.astype(float), scenario.sync_unit * n_meo


def normalize_volume(scenario) -> np.ndarray:
    v = scenario.volume if isinstance(scenario, TrafficScenario) else np.asarray(scenario, dtype=float)
    top = v.max() if v.size else 0.0
    if top <= 0:
        return v.copy()
    return v / top


def save_traffic_csv(scenario: TrafficScenario, path) -> None:
    rows, cols = np.nonzero(scenario.flows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "volume_mb", "flows"])
        for i, j in zip(rows.tolist(), cols.tolist()):
            writer.writerow([i, j, repr(float(scenario.volume[i, j])), int(scenario.flows[i, j])])


def load_traffic_csv(path, n_leo: int, sync_unit: float = 1.0) -> TrafficScenario:
    volume = np.zeros((n_leo, n_leo))
    flows = np.zeros((n_leo, n_leo), dtype=np.int64)
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            i, j = int(row["src"]), int(row["dst"])
            volume[i, j] = float(row["volume_mb"])
            flows[i, j] = int(row["flows"])
    return TrafficScenario(volume, flows, sync_unit)
