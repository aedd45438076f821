"""Controller provisioning as an MDP: reassign LEOs, reward score gains."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import netmodel
from .constellation import build_constellation, default_shells, propagate
from .netmodel import Allocation, EvalParams, EvalResult
from .traffic import TrafficScenario, generate_traffic, normalize_volume


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    snapshot: object
    traffic: TrafficScenario
    initial_allocation: Allocation
    baseline: EvalResult
    params: EvalParams = field(default_factory=EvalParams)
    scenario_id: str = "0"

    @property
    def n_leo(self) -> int:
        return self.snapshot.n_leo

    @property
    def n_meo(self) -> int:
        return self.snapshot.n_meo

    def evaluate(self, allocation: Allocation, params: EvalParams | None = None) -> EvalResult:
        return netmodel.evaluate(self.snapshot, allocation, self.traffic, params or self.params, self.baseline)

    def with_params(self, params: EvalParams) -> "Scenario":
        return make_scenario(self.snapshot, self.traffic, self.initial_allocation, params, self.scenario_id)

    def descriptor(self) -> dict:
        return {"scenario_id": self.scenario_id, "n_leo": self.n_leo, "n_meo": self.n_meo, "slot": self.snapshot.slot}


def make_scenario(snapshot, traffic, initial_allocation, params=None, scenario_id="0") -> Scenario:
    params = params or EvalParams()
    baseline = netmodel.evaluate(snapshot, initial_allocation, traffic, params)
    if not (baseline.o_total > 0 and baseline.d_avg > 0):
        raise ValueError("initial allocation has zero overhead or delay; cannot normalize")
    return Scenario(snapshot, traffic, initial_allocation, baseline, params, str(scenario_id))


def nearest_allocation(snapshot) -> Allocation:
    c = np.argmin(snapshot.leo_meo_distances(), axis=1)
    return Allocation(c, netmodel.senior_of(snapshot), snapshot.n_meo)


def initial_allocation(snapshot, rng, mode: str = "mixed") -> Allocation:
    """Nearest-MEO or uniform random start; "mixed" flips a fair coin."""
    if mode == "mixed":
        mode = "nearest" if rng.random() < 0.5 else "random"
    if mode == "nearest":
        return nearest_allocation(snapshot)
    if mode == "random":
        c = rng.integers(0, snapshot.n_meo, size=snapshot.n_leo)
        return Allocation(c, netmodel.senior_of(snapshot), snapshot.n_meo)
    raise ValueError(f"unknown initial allocation mode {mode!r}")


def sample_scenario(
    n_leo,
    n_meo,
    seed,
    *,
    params=None,
    n_flows=None,
    volume_scale=1.0,
    sync_unit=1.0,
    slot=None,
    slot_duration_s=60.0,
    init_mode="mixed",
    shells=None,
    scenario_id=None,
) -> Scenario:
    """Random slot, gravity traffic and initial allocation, all from `seed`."""
    leo, meo = shells if shells is not None else default_shells(n_leo, n_meo)
    constellation = build_constellation(leo, meo)
    ss = np.random.SeedSequence(seed)
    slot_rng, traffic_seed, init_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    if slot is None:
        slot = int(slot_rng.integers(0, 1440))
    snapshot = propagate(constellation, slot, slot_duration_s)
    if n_flows is None:
        n_flows = 20 * constellation.n_leo
    traffic = generate_traffic(snapshot, n_flows, volume_scale, traffic_seed, sync_unit)
    alloc = initial_allocation(snapshot, init_rng, init_mode)
    return make_scenario(snapshot, traffic, alloc, params, seed if scenario_id is None else scenario_id)


@dataclass(frozen=True)
class Observation:
    traffic_norm: np.ndarray
    initial_onehot: np.ndarray
    current_onehot: np.ndarray
    node_features: np.ndarray  # (n_leo + n_meo, 3 + 1 + 2 n_meo + 1)
    adjacency: np.ndarray  # (n_leo + n_meo,)^2 boolean

    @property
    def n_leo(self) -> int:
        return self.traffic_norm.shape[0]

    @property
    def n_meo(self) -> int:
        return self.initial_onehot.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate(
            [self.traffic_norm.ravel(), self.initial_onehot.ravel(), self.current_onehot.ravel(), self.node_features.ravel()]
        )


def node_feature_dim(n_meo: int) -> int:
    return 3 + 1 + 2 * n_meo + 1


class _StaticEncoding:
    """Per-scenario parts of the observation that never change in an episode."""

    def __init__(self, scenario: Scenario):
        snap = scenario.snapshot
        n_leo, n_meo = snap.n_leo, snap.n_meo
        scale = snap.meo_radius if snap.meo_radius > 0 else np.abs(snap.positions).max()
        self.traffic_norm = normalize_volume(scenario.traffic)
        load = self.traffic_norm.sum(0) + self.traffic_norm.sum(1)
        top = load.max()
        self.load = load / top if top > 0 else load
        self.positions = snap.positions / scale
        self.visibility = snap.visibility
        self.initial_onehot = scenario.initial_allocation.onehot()
        self.meo_eye = np.eye(n_meo)
        self.n_leo, self.n_meo = n_leo, n_meo


def _static(scenario: Scenario) -> _StaticEncoding:
    enc = getattr(scenario, "_enc", None)
    if enc is None:
        enc = _StaticEncoding(scenario)
        object.__setattr__(scenario, "_enc", enc)
    return enc


def encode(allocation: Allocation, scenario: Scenario) -> Observation:
    s = _static(scenario)
    n_leo, n_meo = s.n_leo, s.n_meo
    current = allocation.onehot()
    c = allocation.controller_of
    meo_load = np.bincount(c, weights=s.load, minlength=n_meo)
    total = s.load.sum()
    if total > 0:
        meo_load = meo_load / total
    feats = np.zeros((n_leo + n_meo, node_feature_dim(n_meo)))
    feats[:, :3] = s.positions
    feats[:n_leo, 3] = s.load
    feats[n_leo:, 3] = meo_load
    feats[:n_leo, 4 : 4 + n_meo] = current
    feats[n_leo:, 4 : 4 + n_meo] = s.meo_eye
    feats[:n_leo, 4 + n_meo : 4 + 2 * n_meo] = s.initial_onehot
    feats[n_leo:, 4 + n_meo : 4 + 2 * n_meo] = s.meo_eye
    feats[n_leo:, -1] = 1.0
    adj = s.visibility.copy()
    rows = np.arange(n_leo)
    adj[rows, n_leo + c] = True
    adj[n_leo + c, rows] = True
    return Observation(s.traffic_norm, s.initial_onehot, current, feats, adj)


def valid_actions_mask(allocation: Allocation) -> dict:
    """Policy head supports: every LEO plus STOP (last entry), and per LEO
    every MEO except its current controller."""
    meo = allocation.onehot() == 0
    leo = np.ones(allocation.n_leo + 1, dtype=bool)
    leo[:-1] = meo.any(1)
    return {"leo": leo, "meo": meo}


@dataclass(frozen=True)
class ActionSet:
    moves: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple((int(a), int(b)) for a, b in self.moves))

    @property
    def m(self) -> int:
        return len(self.moves)


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation
    reward: float
    done: bool
    info: dict


class ProvisioningEnv:
    """One episode at a time over a frozen scenario.

    reward = gamma * Score(s') - Score(s) - lam * m, where m is the number of
    reassignments in the action.
    """

    def __init__(self, gamma=0.99, lam=0.01, max_steps=64, k_moves=1, params=None):
        if max_steps < 1 or k_moves < 1:
            raise ValueError("max_steps and k_moves must be >= 1")
        self.gamma = gamma
        self.lam = lam
        self.max_steps = max_steps
        self.k_moves = k_moves
        self.params = params
        self.scenario = None
        self.allocation = None
        self.steps = 0
        self.current_score = None
        self.trace = []

    def _score(self, allocation) -> float:
        return self.scenario.evaluate(allocation, self.params).score

    def reset(self, scenario: Scenario) -> Observation:
        if not (scenario.baseline.o_total > 0 and scenario.baseline.d_avg > 0):
            raise ValueError("scenario baseline is not a valid normalizer")
        self.scenario = scenario
        self.allocation = scenario.initial_allocation
        self.steps = 0
        self.current_score = self._score(self.allocation)
        self.trace = []
        return self.observation()

    def observation(self) -> Observation:
        return encode(self.allocation, self.scenario)

    def valid_actions_mask(self) -> dict:
        if self.scenario is None:
            raise RuntimeError("call reset() first")
        return valid_actions_mask(self.allocation)

    def validate(self, action: ActionSet) -> None:
        n_leo, n_meo = self.scenario.n_leo, self.scenario.n_meo
        if action.m > self.k_moves:
            raise InvalidActionError(f"{action.m} moves exceed the budget of {self.k_moves}")
        seen = set()
        for leo, meo in action.moves:
            if not (0 <= leo < n_leo and 0 <= meo < n_meo):
                raise InvalidActionError(f"move ({leo}, {meo}) out of range")
            if leo in seen:
                raise InvalidActionError(f"LEO {leo} moved twice in one action")
            seen.add(leo)

    def step(self, action) -> StepOutcome:
        if self.scenario is None:
            raise RuntimeError("call reset() first")
        if not isinstance(action, ActionSet):
            action = ActionSet(tuple(action))
        self.validate(action)
        before = self.current_score
        if action.m:
            self.allocation = self.allocation.with_moves(action.moves)
            self.current_score = self._score(self.allocation)
        after = self.current_score
        reward = self.gamma * after - before - self.lam * action.m
        self.steps += 1
        done = self.steps >= self.max_steps
        self.trace.append((self.steps, action.m, after, reward))
        info = {"score_before": before, "score_after": after, "m": action.m}
        return StepOutcome(self.observation(), float(reward), done, info)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "m", "score", "reward"])
            for step, m, sc, r in self.trace:
                w.writerow([step, m, repr(sc), repr(r)])
