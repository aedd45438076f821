"""Experiment configuration: one YAML document with a versioned schema."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .agent.ppo import TrainConfig
from .baselines import GAConfig
from .constellation import ShellConfig, default_shells
from .netmodel import EvalParams

SCHEMA_VERSION = 1
METHODS = ("brute_force", "greedy", "ga_kmeans", "random", "ppo")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConstellationSection:
    n_leo: int = 8
    n_meo: int = 3
    leo: ShellConfig | None = None
    meo: ShellConfig | None = None
    slot_duration_s: float = 60.0

    def shells(self, n_leo: int | None = None):
        n_leo = self.n_leo if n_leo is None else n_leo
        leo, meo = default_shells(n_leo, self.n_meo)
        if self.leo is not None and n_leo == self.n_leo:
            leo = self.leo
        if self.meo is not None:
            meo = self.meo
        return leo, meo


@dataclass(frozen=True)
class TrafficSection:
    flows_per_leo: float = 20.0
    volume_scale: float = 1.0
    sync_unit: float = 1.0


@dataclass(frozen=True)
class ScenarioSection:
    count: int = 20
    first_seed: int | None = None
    train_count: int | None = None
    train_first_seed: int | None = None
    init_mode: str = "mixed"


@dataclass(frozen=True)
class SolverSection:
    ga: GAConfig = field(default_factory=GAConfig)
    greedy_max_iters: int = 10_000
    random_samples: int = 1000
    infer_max_steps: int = 64
    checkpoint: str | None = None


@dataclass(frozen=True)
class BenchSection:
    methods: tuple = ("brute_force", "greedy", "ga_kmeans", "random")
    alphas: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    alpha_solver: str = "ga_kmeans"
    leo_counts: tuple = (50, 100, 250, 500, 1000)
    scale_solver: str = "ppo"
    scale_repeats: int = 3
    smoothing_window: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    constellation: ConstellationSection = field(default_factory=ConstellationSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    eval: EvalParams = field(default_factory=EvalParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    solvers: SolverSection = field(default_factory=SolverSection)
    scenarios: ScenarioSection = field(default_factory=ScenarioSection)
    bench: BenchSection = field(default_factory=BenchSection)
    output_dir: str = "out"
    schema: int = SCHEMA_VERSION

    def scenario_seeds(self) -> list[int]:
        first = self.seed if self.scenarios.first_seed is None else self.scenarios.first_seed
        return [first + i for i in range(self.scenarios.count)]

    def train_seeds(self) -> list[int]:
        s = self.scenarios
        if s.train_count is None and s.train_first_seed is None:
            return self.scenario_seeds()
        first = self.seed if s.train_first_seed is None else s.train_first_seed
        count = s.count if s.train_count is None else s.train_count
        return [first + i for i in range(count)]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(
            self,
            seed=seed,
            train=self.train.replace(seed=seed),
            solvers=replace(self.solvers, ga=self.solvers.ga.replace(seed=seed)),
        )

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        sub = _NESTED.get((cls, k))
        if sub is not None:
            v = _build(sub, v, f"{where}.{k}") if v is not None else None
        elif isinstance(v, list):
            v = tuple(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (ExperimentConfig, "constellation"): ConstellationSection,
    (ExperimentConfig, "traffic"): TrafficSection,
    (ExperimentConfig, "eval"): EvalParams,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "solvers"): SolverSection,
    (ExperimentConfig, "scenarios"): ScenarioSection,
    (ExperimentConfig, "bench"): BenchSection,
    (ConstellationSection, "leo"): ShellConfig,
    (ConstellationSection, "meo"): ShellConfig,
    (SolverSection, "ga"): GAConfig,
}


def config_from_dict(data: dict | None) -> ExperimentConfig:
    data = dict(data or {})
    schema = data.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")
    seed = data.get("seed", 0)
    # sub-seeds follow the global seed unless set explicitly
    train = dict(data.get("train") or {})
    train.setdefault("seed", seed)
    data["train"] = train
    solvers = dict(data.get("solvers") or {})
    ga = dict(solvers.get("ga") or {})
    ga.setdefault("seed", seed)
    solvers["ga"] = ga
    data["solvers"] = solvers
    cfg = _build(ExperimentConfig, data, "config")
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    for name in (*cfg.bench.methods, cfg.bench.alpha_solver, cfg.bench.scale_solver):
        if name not in METHODS:
            raise ConfigError(f"unknown method {name!r}; choose from {METHODS}")
    for a in cfg.bench.alphas:
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"alpha {a} outside [0, 1]")
    if cfg.scenarios.count < 1:
        raise ConfigError("scenarios.count must be >= 1")
    if cfg.constellation.n_leo < 1 or cfg.constellation.n_meo < 1:
        raise ConfigError("constellation needs at least one LEO and one MEO")
    if cfg.traffic.flows_per_leo < 0 or cfg.traffic.sync_unit <= 0:
        raise ConfigError("traffic.flows_per_leo must be >= 0 and sync_unit > 0")


def load_config(path=None, seed: int | None = None) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    if seed is not None:
        # an explicit seed resets every derived sub-seed
        data = dict(data)
        data["seed"] = seed
        for section, key in (("train", "seed"),):
            sec = dict(data.get(section) or {})
            sec.pop(key, None)
            data[section] = sec
        solvers = dict(data.get("solvers") or {})
        ga = dict(solvers.get("ga") or {})
        ga.pop("seed", None)
        solvers["ga"] = ga
        data["solvers"] = solvers
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
