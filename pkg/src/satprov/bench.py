"""Experiments: training runs, method comparison, alpha and scale sweeps.

Every table is written twice: a data file that is a pure function of the
config and seed, and a timing file holding the wall-clock columns. Only the
data files are expected to be byte-identical across runs.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import baselines
from .agent.ppo import METRIC_FIELDS, PolicyState, infer, load_checkpoint, save_checkpoint, train
from .baselines import SolverResult
from .config import ExperimentConfig
from .env import Scenario, sample_scenario
from .netmodel import combine

IDENTITY_TOL = 1e-12


def make_scenario_for(cfg: ExperimentConfig, seed: int, n_leo: int | None = None, alpha: float | None = None) -> Scenario:
    con = cfg.constellation
    n_leo = con.n_leo if n_leo is None else n_leo
    params = cfg.eval if alpha is None else cfg.eval.replace(alpha=alpha)
    return sample_scenario(
        n_leo,
        con.n_meo,
        seed,
        params=params,
        n_flows=int(round(cfg.traffic.flows_per_leo * n_leo)),
        volume_scale=cfg.traffic.volume_scale,
        sync_unit=cfg.traffic.sync_unit,
        slot_duration_s=con.slot_duration_s,
        init_mode=cfg.scenarios.init_mode,
        shells=con.shells(n_leo),
    )


def scenario_set(cfg: ExperimentConfig, seeds=None, n_leo=None, alpha=None) -> list[Scenario]:
    seeds = cfg.scenario_seeds() if seeds is None else seeds
    return [make_scenario_for(cfg, s, n_leo, alpha) for s in seeds]


def descriptor(cfg: ExperimentConfig, n_leo=None, alpha=None) -> dict:
    return {
        "n_leo": cfg.constellation.n_leo if n_leo is None else n_leo,
        "n_meo": cfg.constellation.n_meo,
        "flows_per_leo": cfg.traffic.flows_per_leo,
        "volume_scale": cfg.traffic.volume_scale,
        "alpha": cfg.eval.alpha if alpha is None else alpha,
        "delay_mode": cfg.eval.delay_mode,
        "init_mode": cfg.scenarios.init_mode,
    }


# ---------------------------------------------------------------- training


def train_policy(cfg: ExperimentConfig, alpha: float | None = None, on_episode=None):
    scenarios = scenario_set(cfg, cfg.train_seeds(), alpha=alpha)
    return train(None, scenarios, cfg.train, on_episode=on_episode)


def smooth(values, window: int) -> np.ndarray:
    """Trailing moving average; the first window-1 points average what exists."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v
    c = np.cumsum(np.insert(v, 0, 0.0))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def run_training(cfg: ExperimentConfig, out_dir=None):
    """Train, then write metrics.csv, metrics_smoothed.csv and checkpoint.json."""
    state, log = train_policy(cfg)
    if out_dir is not None:
        out = _outdir(out_dir)
        _write_csv(out / "metrics.csv", METRIC_FIELDS, [[r[k] for k in METRIC_FIELDS] for r in log])
        sm = smooth([r["final_score"] for r in log], cfg.bench.smoothing_window)
        _write_csv(
            out / "metrics_smoothed.csv",
            ("episode", "smoothed_final_score"),
            [[r["episode"], s] for r, s in zip(log, sm)],
        )
        save_checkpoint(state, out / "checkpoint.json", {"train_seeds": cfg.train_seeds()})
    return state, log


def policy_for(cfg: ExperimentConfig, alpha: float | None = None) -> PolicyState:
    if cfg.solvers.checkpoint:
        state = load_checkpoint(cfg.solvers.checkpoint)
        if state.n_meo != cfg.constellation.n_meo:
            raise ValueError(f"checkpoint was trained for {state.n_meo} MEOs, config has {cfg.constellation.n_meo}")
        return state
    state, _ = train_policy(cfg, alpha)
    return state


# ---------------------------------------------------------------- solving


def solve(method: str, scenario: Scenario, cfg: ExperimentConfig, policy: PolicyState | None = None, early_stop=True) -> SolverResult:
    s = cfg.solvers
    if method == "brute_force":
        return baselines.brute_force(scenario)
    if method == "greedy":
        return baselines.greedy_hill_climb(scenario, max_iters=s.greedy_max_iters)
    if method == "ga_kmeans":
        return baselines.ga_kmeans(scenario, s.ga)
    if method == "random":
        return baselines.random_search(scenario, s.random_samples, cfg.seed)
    if method == "ppo":
        if policy is None:
            raise ValueError("ppo needs a trained policy")
        r = infer(policy, scenario, s.infer_max_steps, policy.config.k_moves, early_stop=early_stop)
        return SolverResult(r.allocation, scenario.evaluate(r.allocation), r.wall_clock_s, r.steps, "ppo", r.trace)
    raise ValueError(f"unknown method {method!r}")


def _check_identity(res, alpha) -> None:
    e = res.eval
    if abs(e.score - combine(e.term_o, e.term_d, alpha)) > IDENTITY_TOL:
        raise AssertionError(f"score {e.score} breaks the combiner identity")


def _mean_std(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    return float(x.mean()), float(x.std())


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    score_mean: float
    score_std: float
    time_mean_s: float
    time_std_s: float
    n: int
    instance: dict
    seeds: tuple

    def data(self) -> dict:
        return {
            "method": self.method,
            "score_mean": self.score_mean,
            "score_std": self.score_std,
            "n": self.n,
            "instance": self.instance,
            "seeds": list(self.seeds),
        }

    def timing(self) -> dict:
        return {"method": self.method, "time_mean_s": self.time_mean_s, "time_std_s": self.time_std_s, "n": self.n}


def compare_algorithms(cfg: ExperimentConfig, methods=None, out_dir=None, policy: PolicyState | None = None):
    """Every method on the same scenario set. Returns (rows, per-run records)."""
    methods = list(cfg.bench.methods if methods is None else methods)
    if not methods:
        raise ValueError("need at least one method")
    seeds = cfg.scenario_seeds()
    scenarios = scenario_set(cfg, seeds)
    if "ppo" in methods and policy is None:
        policy = policy_for(cfg)
    rows, runs = [], []
    for method in methods:
        scores, times = [], []
        for seed, sc in zip(seeds, scenarios):
            res = solve(method, sc, cfg, policy)
            _check_identity(res, sc.params.alpha)
            scores.append(res.score)
            times.append(res.wall_clock_s)
            runs.append({
                "method": method,
                "seed": seed,
                "scenario": sc.descriptor(),
                "score": res.score,
                "term_o": res.eval.term_o,
                "term_d": res.eval.term_d,
                "allocation": [int(c) for c in res.allocation.controller_of],
                "evaluations": res.evaluations,
                "wall_clock_s": res.wall_clock_s,
            })
        rows.append(ComparisonRow(method, *_mean_std(scores), *_mean_std(times), len(seeds), descriptor(cfg), tuple(seeds)))
    if out_dir is not None:
        out = _outdir(out_dir)
        data = {
            "rows": [r.data() for r in rows],
            "runs": [{k: v for k, v in r.items() if k != "wall_clock_s"} for r in runs],
        }
        timing = {
            "rows": [r.timing() for r in rows],
            "runs": [{"method": r["method"], "seed": r["seed"], "wall_clock_s": r["wall_clock_s"]} for r in runs],
        }
        _write_json(out / "compare.json", data)
        _write_json(out / "compare_timing.json", timing)
        _write_csv(
            out / "compare.csv",
            ("method", "score_mean", "score_std", "n", "n_leo", "n_meo", "alpha", "seeds"),
            [[r.method, r.score_mean, r.score_std, r.n, r.instance["n_leo"], r.instance["n_meo"],
              r.instance["alpha"], " ".join(map(str, r.seeds))] for r in rows],
        )
    return rows, runs


# ---------------------------------------------------------------- sweeps


ALPHA_FIELDS = ("alpha", "enhanced_overhead", "enhanced_delay", "network_score",
                "enhanced_overhead_std", "enhanced_delay_std", "network_score_std", "n", "solver", "seeds")


def sweep_alpha(cfg: ExperimentConfig, alphas=None, out_dir=None, solver: str | None = None):
    """Mean overhead term, delay term and score per alpha on fixed scenarios."""
    alphas = list(cfg.bench.alphas if alphas is None else alphas)
    if not alphas:
        raise ValueError("need at least one alpha")
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
    solver = solver or cfg.bench.alpha_solver
    seeds = cfg.scenario_seeds()
    rows = []
    for a in alphas:
        sub = replace(cfg, eval=cfg.eval.replace(alpha=a))
        policy = policy_for(sub, a) if solver == "ppo" else None
        to, td, sc_ = [], [], []
        for sc in scenario_set(sub, seeds):
            res = solve(solver, sc, sub, policy)
            _check_identity(res, a)
            to.append(res.eval.term_o)
            td.append(res.eval.term_d)
            sc_.append(res.score)
        (mo, so), (md, sd), (ms, ss) = _mean_std(to), _mean_std(td), _mean_std(sc_)
        rows.append({
            "alpha": a, "enhanced_overhead": mo, "enhanced_delay": md, "network_score": ms,
            "enhanced_overhead_std": so, "enhanced_delay_std": sd, "network_score_std": ss,
            "n": len(seeds), "solver": solver, "seeds": " ".join(map(str, seeds)),
        })
    if out_dir is not None:
        out = _outdir(out_dir)
        _write_csv(out / "alpha.csv", ALPHA_FIELDS, [[r[k] for k in ALPHA_FIELDS] for r in rows])
    return rows


def loglog_slope(sizes, times):
    """Least-squares slope of log(time) against log(size); None if undefined."""
    sizes = np.asarray(sizes, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(np.unique(sizes)) < 2 or np.any(times <= 0):
        return None
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


SCALE_FIELDS = ("n_leo", "n_meo", "score_mean", "score_std", "n", "solver", "seeds")
SCALE_TIMING_FIELDS = ("n_leo", "solve_time_mean_s", "solve_time_std_s", "eval_time_mean_s")


def sweep_scale(cfg: ExperimentConfig, leo_counts=None, out_dir=None, solver: str | None = None, policy=None):
    """Quality and wall-clock per constellation size, plus the log-log slope.

    Policy rollouts run the full horizon so every size does the same number
    of steps.
    """
    leo_counts = list(cfg.bench.leo_counts if leo_counts is None else leo_counts)
    if not leo_counts:
        raise ValueError("need at least one LEO count")
    solver = solver or cfg.bench.scale_solver
    if solver == "ppo" and policy is None:
        policy = policy_for(cfg)
    seeds = cfg.scenario_seeds()[: cfg.bench.scale_repeats]
    rows, timing = [], []
    for n in leo_counts:
        scores, times, evals = [], [], []
        for sc in scenario_set(cfg, seeds, n_leo=n):
            res = solve(solver, sc, cfg, policy, early_stop=False)
            _check_identity(res, sc.params.alpha)
            scores.append(res.score)
            times.append(res.wall_clock_s)
            t0 = time.perf_counter()
            sc.evaluate(res.allocation)
            evals.append(time.perf_counter() - t0)
        rows.append({"n_leo": n, "n_meo": cfg.constellation.n_meo, **dict(zip(("score_mean", "score_std"), _mean_std(scores))),
                     "n": len(seeds), "solver": solver, "seeds": " ".join(map(str, seeds))})
        m, s = _mean_std(times)
        timing.append({"n_leo": n, "solve_time_mean_s": m, "solve_time_std_s": s, "eval_time_mean_s": _mean_std(evals)[0]})
    slope = loglog_slope(leo_counts, [t["solve_time_mean_s"] for t in timing])
    if out_dir is not None:
        out = _outdir(out_dir)
        _write_csv(out / "scale.csv", SCALE_FIELDS, [[r[k] for k in SCALE_FIELDS] for r in rows])
        _write_csv(out / "scale_timing.csv", SCALE_TIMING_FIELDS, [[t[k] for k in SCALE_TIMING_FIELDS] for t in timing])
        _write_json(out / "scale_slope.json", {"solver": solver, "slope": slope, "leo_counts": leo_counts})
    return rows, timing, slope


# ---------------------------------------------------------------- output


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
