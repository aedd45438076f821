"""Reference solvers for the provisioning problem.

brute_force is the optimality oracle for small instances; the others are
the comparison set (hill climbing, K-means seeded GA, random search).
Each solver is a pure function of its inputs and seed.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .netmodel import Allocation, EvalParams, EvalResult, MoveEvaluator, senior_of

BRUTE_FORCE_LIMIT = 10**6


class InstanceTooLarge(ValueError):
    pass


@dataclass
class SolverResult:
    allocation: Allocation
    eval: EvalResult
    wall_clock_s: float
    evaluations: int
    method: str = ""
    trace: list = field(default_factory=list)

    @property
    def score(self) -> float:
        return self.eval.score

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "score": self.eval.score,
            "allocation": self.allocation.to_dict(),
            "eval": self.eval.to_dict(),
            "wall_clock_s": self.wall_clock_s,
            "evaluations": self.evaluations,
        }


@dataclass(frozen=True)
class GAConfig:
    population: int = 50
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    elitism: int = 2
    seed: int = 0
    tournament: int = 3

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must lie in [0, population)")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tournament < 1:
            raise ValueError("tournament size must be >= 1")

    def replace(self, **kw) -> "GAConfig":
        return GAConfig(**{**asdict(self), **kw})


def _prepare(scenario, params: EvalParams | None):
    """Scenario re-baselined for `params` when the cost model changes."""
    if params is None or params == scenario.params:
        return scenario
    if params.replace(alpha=scenario.params.alpha) == scenario.params:
        # alpha does not enter the baseline totals
        return type(scenario)(
            scenario.snapshot, scenario.traffic, scenario.initial_allocation,
            scenario.baseline, params, scenario.scenario_id,
        )
    return scenario.with_params(params)


class _Scorer:
    def __init__(self, scenario):
        self.scenario = scenario
        self.calls = 0

    def __call__(self, allocation: Allocation) -> EvalResult:
        self.calls += 1
        return self.scenario.evaluate(allocation)


def brute_force(scenario, params: EvalParams | None = None, limit: int = BRUTE_FORCE_LIMIT) -> SolverResult:
    """Exhaustive search; ties go to the lexicographically smallest vector."""
    scenario = _prepare(scenario, params)
    n_leo, n_meo = scenario.n_leo, scenario.n_meo
    if n_meo**n_leo > limit:
        raise InstanceTooLarge(f"{n_meo}^{n_leo} allocations exceed the limit of {limit}")
    start = time.perf_counter()
    score = _Scorer(scenario)
    senior = senior_of(scenario.snapshot)
    best = best_eval = None
    for combo in itertools.product(range(n_meo), repeat=n_leo):
        alloc = Allocation(np.array(combo, dtype=np.int64), senior, n_meo)
        res = score(alloc)
        if best_eval is None or res.score > best_eval.score:
            best, best_eval = alloc, res
    return SolverResult(best, best_eval, time.perf_counter() - start, score.calls, "brute_force")


def greedy_hill_climb(scenario, params: EvalParams | None = None, max_iters: int = 10_000) -> SolverResult:
    """Best-improvement local search over single reassignments.

    Ties go to the lowest LEO index, then the lowest MEO index. Stops when no
    move strictly improves the score or after max_iters moves.
    """
    scenario = _prepare(scenario, params)
    start = time.perf_counter()
    score = _Scorer(scenario)
    moves = MoveEvaluator(scenario.snapshot, scenario.traffic, scenario.params, scenario.baseline)
    alloc = scenario.initial_allocation
    cur = score(alloc)
    trace = [cur.score]
    candidates = scenario.n_leo * (scenario.n_meo - 1)
    evaluations = 1
    for _ in range(max_iters):
        table = moves.scores(alloc)
        evaluations += candidates
        flat = int(np.argmax(table))
        j, b = divmod(flat, scenario.n_meo)
        if not table[j, b] > cur.score:
            break
        nxt = alloc.with_moves([(j, b)])
        res = score(nxt)
        evaluations += 1
        if not res.score > cur.score:
            break
        alloc, cur = nxt, res
        trace.append(cur.score)
    return SolverResult(alloc, cur, time.perf_counter() - start, evaluations, "greedy", trace)


def kmeans_seed(snapshot, n_meo: int, seed=0, tol: float = 1e-6, max_iter: int = 100) -> Allocation:
    """Lloyd's k-means (k = n_meo) on LEO positions, then each cluster goes to
    the MEO nearest its centroid."""
    pts = snapshot.leo_positions
    n = len(pts)
    k = min(n_meo, n)
    rng = np.random.default_rng(seed)
    centroids = pts[rng.choice(n, size=k, replace=False)].copy()
    scale = float(np.abs(pts).max()) or 1.0
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        labels = np.argmin(d, axis=1)
        new = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = pts[members].mean(0)
            else:
                far = int(np.argmax(d[np.arange(n), labels]))
                new[c] = pts[far]
                labels[far] = c
        shift = np.sqrt(((new - centroids) ** 2).sum(-1)).max() / scale
        centroids = new
        if shift < tol:
            break
    d = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
    labels = np.argmin(d, axis=1)
    meo = snapshot.meo_positions
    to_meo = ((centroids[:, None, :] - meo[None, :, :]) ** 2).sum(-1)
    cluster_meo = np.argmin(to_meo, axis=1)  # first index wins ties
    return Allocation(cluster_meo[labels], senior_of(snapshot), n_meo)


def ga_refine(scenario, seed_allocation: Allocation, ga_config: GAConfig | None = None, params: EvalParams | None = None) -> SolverResult:
    """Genetic search over controller vectors seeded with `seed_allocation`.

    Uniform crossover, per-gene random-controller mutation, tournament
    selection and elitism. Fitness is the score; repeated chromosomes are
    looked up rather than re-evaluated. Returns the best chromosome seen.
    """
    cfg = ga_config or GAConfig()
    scenario = _prepare(scenario, params)
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    n_leo, n_meo = scenario.n_leo, scenario.n_meo
    senior = senior_of(scenario.snapshot)
    score = _Scorer(scenario)
    cache = {}

    def fitness(genes):
        key = genes.tobytes()
        hit = cache.get(key)
        if hit is None:
            alloc = Allocation(genes, senior, n_meo)
            hit = cache[key] = (score(alloc), alloc)
        return hit

    def mutate(genes):
        out = genes.copy()
        flip = rng.random(n_leo) < cfg.mutation_rate
        out[flip] = rng.integers(0, n_meo, size=int(flip.sum()))
        return out

    base = np.asarray(seed_allocation.controller_of, dtype=np.int64)
    pop = [base.copy()] + [mutate(base) for _ in range(cfg.population - 1)]
    fits = np.array([fitness(g)[0].score for g in pop])
    best_i = int(np.argmax(fits))
    best_genes, best_fit = pop[best_i].copy(), fits[best_i]
    trace = [best_fit]

    def tournament():
        picks = rng.integers(0, cfg.population, size=cfg.tournament)
        return pop[int(picks[np.argmax(fits[picks])])]

    for _ in range(cfg.generations):
        order = np.argsort(-fits, kind="stable")
        children = [pop[int(i)].copy() for i in order[: cfg.elitism]]
        while len(children) < cfg.population:
            a, b = tournament(), tournament()
            if rng.random() < cfg.crossover_rate:
                child = np.where(rng.random(n_leo) < 0.5, a, b)
            else:
                child = a.copy()
            children.append(mutate(child))
        pop = children
        fits = np.array([fitness(g)[0].score for g in pop])
        i = int(np.argmax(fits))
        if fits[i] > best_fit:
            best_genes, best_fit = pop[i].copy(), fits[i]
        trace.append(best_fit)
    res, alloc = fitness(best_genes)
    return SolverResult(alloc, res, time.perf_counter() - start, score.calls, "ga_kmeans", trace)


def ga_kmeans(scenario, ga_config: GAConfig | None = None, params: EvalParams | None = None) -> SolverResult:
    cfg = ga_config or GAConfig()
    start = time.perf_counter()
    seed_alloc = kmeans_seed(scenario.snapshot, scenario.n_meo, cfg.seed)
    res = ga_refine(scenario, seed_alloc, cfg, params)
    res.wall_clock_s = time.perf_counter() - start
    return res


def random_search(scenario, n_samples: int, seed=0, params: EvalParams | None = None) -> SolverResult:
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    scenario = _prepare(scenario, params)
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    score = _Scorer(scenario)
    best = scenario.initial_allocation
    best_eval = score(best)
    trace = [best_eval.score]
    for _ in range(n_samples):
        alloc = Allocation(rng.integers(0, scenario.n_meo, size=scenario.n_leo), best.senior, scenario.n_meo)
        res = score(alloc)
        if res.score > best_eval.score:
            best, best_eval = alloc, res
        trace.append(best_eval.score)
    return SolverResult(best, best_eval, time.perf_counter() - start, score.calls, "random", trace)
