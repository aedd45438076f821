"""scikit-learn style wrappers around the solvers.

A sample is a Scenario; predict returns one Allocation per scenario and
score returns the mean network score of those allocations. Only the
policy estimator learns anything in fit; the search baselines validate
their input and record what they were fitted on.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .agent.ppo import PolicyState, TrainConfig, infer, train
from .baselines import GAConfig
from .env import Scenario


def check_scenarios(X, *, same_meo: bool = False) -> list[Scenario]:
    if isinstance(X, Scenario):
        X = [X]
    try:
        scenarios = list(X)
    except TypeError as exc:
        raise TypeError("expected a Scenario or an iterable of Scenarios") from exc
    if not scenarios:
        raise ValueError("need at least one scenario")
    bad = [type(s).__name__ for s in scenarios if not isinstance(s, Scenario)]
    if bad:
        raise TypeError(f"expected Scenario objects, got {sorted(set(bad))}")
    if same_meo and len({s.n_meo for s in scenarios}) != 1:
        raise ValueError("all scenarios must share the MEO count")
    return scenarios


class _Provisioner(BaseEstimator):
    def _solve(self, scenario):  # -> SolverResult-like with .allocation and .score
        raise NotImplementedError

    def fit(self, X, y=None):
        scenarios = check_scenarios(X)
        self.n_meo_ = scenarios[0].n_meo
        self.n_scenarios_ = len(scenarios)
        return self

    def solve(self, X) -> list:
        check_is_fitted(self)
        return [self._solve(s) for s in check_scenarios(X)]

    def predict(self, X) -> list:
        return [r.allocation for r in self.solve(X)]

    def score(self, X, y=None) -> float:
        scenarios = check_scenarios(X)
        return float(np.mean([s.evaluate(a).score for s, a in zip(scenarios, self.predict(scenarios))]))


class BruteForceProvisioner(_Provisioner):
    def __init__(self, limit: int = baselines.BRUTE_FORCE_LIMIT):
        self.limit = limit

    def _solve(self, scenario):
        return baselines.brute_force(scenario, limit=self.limit)


class GreedyProvisioner(_Provisioner):
    def __init__(self, max_iters: int = 10_000):
        self.max_iters = max_iters

    def _solve(self, scenario):
        return baselines.greedy_hill_climb(scenario, max_iters=self.max_iters)


class GAKMeansProvisioner(_Provisioner):
    def __init__(self, population=50, generations=100, crossover_rate=0.9, mutation_rate=0.1, elitism=2, tournament=3, seed=0):
        self.population = population
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.elitism = elitism
        self.tournament = tournament
        self.seed = seed

    def _config(self) -> GAConfig:
        return GAConfig(self.population, self.generations, self.crossover_rate, self.mutation_rate, self.elitism, self.seed, self.tournament)

    def fit(self, X, y=None):
        self._config()
        return super().fit(X, y)

    def _solve(self, scenario):
        return baselines.ga_kmeans(scenario, self._config())


class RandomSearchProvisioner(_Provisioner):
    def __init__(self, n_samples: int = 1000, seed: int = 0):
        self.n_samples = n_samples
        self.seed = seed

    def _solve(self, scenario):
        return baselines.random_search(scenario, self.n_samples, self.seed)


class PPOProvisioner(_Provisioner):
    """Trains the graph actor-critic on the fit scenarios; predict runs the
    greedy rollout and returns the best allocation visited."""

    def __init__(self, max_episodes=2000, max_steps=64, learning_rate=3e-4, buffer_size=2048, minibatch_size=256,
                 update_epochs=4, entropy_coef=0.01, hidden_dim=64, n_layers=2, F_switch=50, seed=0, early_stop=True):
        self.max_episodes = max_episodes
        self.max_steps = max_steps
        self.learning_rate = learning_rate
        self.buffer_size = buffer_size
        self.minibatch_size = minibatch_size
        self.update_epochs = update_epochs
        self.entropy_coef = entropy_coef
        self.hidden_dim = hidden_dim
        self.n_layers = n_layers
        self.F_switch = F_switch
        self.seed = seed
        self.early_stop = early_stop

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            max_episodes=self.max_episodes, max_steps=self.max_steps, learning_rate=self.learning_rate,
            buffer_size=self.buffer_size, minibatch_size=self.minibatch_size, update_epochs=self.update_epochs,
            entropy_coef=self.entropy_coef, hidden_dim=self.hidden_dim, n_layers=self.n_layers,
            F_switch=self.F_switch, seed=self.seed,
        )

    def fit(self, X, y=None):
        scenarios = check_scenarios(X, same_meo=True)
        self.policy_, self.training_log_ = train(None, scenarios, self.train_config())
        self.n_meo_ = scenarios[0].n_meo
        self.n_scenarios_ = len(scenarios)
        return self

    @classmethod
    def from_policy(cls, state: PolicyState, **kw) -> "PPOProvisioner":
        est = cls(**kw)
        est.policy_, est.training_log_ = state, []
        est.n_meo_, est.n_scenarios_ = state.n_meo, 0
        return est

    def _solve(self, scenario):
        if scenario.n_meo != self.n_meo_:
            raise ValueError(f"policy was fitted for {self.n_meo_} MEOs, scenario has {scenario.n_meo}")
        r = infer(self.policy_, scenario, self.max_steps, early_stop=self.early_stop)
        return baselines.SolverResult(r.allocation, scenario.evaluate(r.allocation), r.wall_clock_s, r.steps, "ppo", r.trace)


__all__ = [
    "BruteForceProvisioner",
    "GAKMeansProvisioner",
    "GreedyProvisioner",
    "NotFittedError",
    "PPOProvisioner",
    "RandomSearchProvisioner",
    "check_scenarios",
]
