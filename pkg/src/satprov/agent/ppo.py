"""PPO training loop with scenario switching, and greedy inference."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..env import ActionSet, ProvisioningEnv, Scenario, encode, node_feature_dim
from ..netmodel import Allocation
from . import network as nn

CHECKPOINT_FORMAT = "satprov-policy"
CHECKPOINT_VERSION = 1
# cap on batch * nodes^2 per forward chunk, keeps big graphs in memory
_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    buffer_size: int = 2048
    minibatch_size: int = 256
    update_epochs: int = 4
    F_switch: int = 50
    max_episodes: int = 15000
    max_steps: int = 64
    seed: int = 0
    hidden_dim: int = 64
    n_layers: int = 2
    lam: float = 0.01
    k_moves: int = 1
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.minibatch_size < 1 or self.buffer_size % self.minibatch_size:
            raise ValueError("buffer_size must be a positive multiple of minibatch_size")
        if self.F_switch < 1 or self.max_steps < 1 or self.update_epochs < 1:
            raise ValueError("F_switch, max_steps and update_epochs must be >= 1")
        if self.max_episodes < 0 or self.learning_rate < 0:
            raise ValueError("max_episodes and learning_rate must be non-negative")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **kw})

    def make_env(self, params=None) -> ProvisioningEnv:
        return ProvisioningEnv(self.gamma, self.lam, self.max_steps, self.k_moves, params)


@dataclass
class PolicyState:
    params: dict
    config: TrainConfig
    n_features: int
    n_meo: int
    optimizer: nn.Adam | None = None

    @classmethod
    def initial(cls, n_meo: int, config: TrainConfig, seed=None) -> "PolicyState":
        n_features = node_feature_dim(n_meo)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        params = nn.init_params(n_features, n_meo, config.hidden_dim, config.n_layers, rng)
        return cls(params, config, n_features, n_meo, nn.Adam(params, config.learning_rate))


@dataclass
class TransitionRecord:
    scenario: Scenario
    allocation: Allocation
    leo_choice: np.ndarray
    meo_choice: np.ndarray
    sub_valid: np.ndarray
    is_move: np.ndarray
    leo_mask: np.ndarray
    meo_mask: np.ndarray
    log_prob: float
    reward: float
    value_estimate: float
    done: bool

    @property
    def observation(self):
        return encode(self.allocation, self.scenario)


def _graph_inputs(obs):
    return obs.node_features, nn.normalize_adjacency(obs.adjacency)


def act(params: dict, obs, rng=None, k_moves: int = 1, greedy: bool = False):
    """Pick up to k_moves (leo, meo) pairs, ending early on STOP.

    Sampling draws the LEO head, then the MEO head for the drawn LEO. Greedy
    mode takes the argmax of each head in the same order.
    Returns the ActionSet, the per-sub-choice arrays needed to recompute the
    log-probability later, the joint log-probability and the state value.
    """
    x, a_norm = _graph_inputs(obs)
    n_leo, n_meo = obs.n_leo, obs.n_meo
    emb, pooled = nn.encode_graph(params, x, a_norm)
    leo_z, _ = nn.leo_logits(params, emb, pooled, n_leo)
    value, _ = nn.value_forward(params, pooled)
    meo_ok = obs.current_onehot == 0
    leo_choice = np.full(k_moves, n_leo)
    meo_choice = np.zeros(k_moves, dtype=np.int64)
    sub_valid = np.zeros(k_moves, dtype=bool)
    is_move = np.zeros(k_moves, dtype=bool)
    masks = np.ones((k_moves, n_leo + 1), dtype=bool)
    masks[0, :n_leo] = meo_ok.any(1)
    meo_masks = np.ones((k_moves, n_meo), dtype=bool)
    logp = 0.0
    moves = []
    for k in range(k_moves):
        if k:
            masks[k] = masks[k - 1]
            masks[k, leo_choice[k - 1]] = False
        lp = nn.log_softmax(leo_z, masks[k])
        j = int(np.argmax(lp)) if greedy else _pick(lp, rng)
        leo_choice[k] = j
        sub_valid[k] = True
        logp += lp[j]
        if j == n_leo:
            break
        meo_masks[k] = meo_ok[j]
        mlp = nn.log_softmax(nn.meo_logits(params, pooled, emb[j])[0], meo_masks[k])
        i = int(np.argmax(mlp)) if greedy else _pick(mlp, rng)
        meo_choice[k] = i
        is_move[k] = True
        logp += mlp[i]
        moves.append((j, i))
    arrays = (leo_choice, meo_choice, sub_valid, is_move, masks, meo_masks)
    return ActionSet(tuple(moves)), arrays, float(logp), float(value)


def _pick(logp: np.ndarray, rng) -> int:
    p = np.exp(logp)
    cdf = np.cumsum(p)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(j, len(p) - 1)


def state_value(params: dict, obs) -> float:
    x, a_norm = _graph_inputs(obs)
    _, pooled = nn.encode_graph(params, x, a_norm)
    return float(nn.value_forward(params, pooled)[0])


def compute_gae(rewards, values, dones, gamma: float, gae_lambda: float, last_value: float = 0.0):
    """Generalized advantage estimates and returns over a flat buffer.

    `dones[t]` cuts bootstrapping after step t; `last_value` bootstraps the
    final step when it is not terminal.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * gae_lambda * live * running
        adv[t] = running
    return adv, adv + values


def _batches(records, idx, adv, ret):
    """Yield loss_and_grad batches grouped by graph size and chunked."""
    groups = {}
    for i in idx:
        groups.setdefault(records[i].scenario.n_leo, []).append(i)
    for n_leo, members in sorted(groups.items()):
        n_nodes = n_leo + records[members[0]].scenario.n_meo
        chunk = max(1, _CHUNK_ELEMS // (n_nodes * n_nodes))
        for s in range(0, len(members), chunk):
            part = members[s : s + chunk]
            xs, As = zip(*(_graph_inputs(records[i].observation) for i in part))
            yield {
                "x": np.stack(xs),
                "a_norm": np.stack(As),
                "n_leo": n_leo,
                "leo_mask": np.stack([records[i].leo_mask for i in part]),
                "meo_mask": np.stack([records[i].meo_mask for i in part]),
                "leo_choice": np.stack([records[i].leo_choice for i in part]),
                "meo_choice": np.stack([records[i].meo_choice for i in part]),
                "sub_valid": np.stack([records[i].sub_valid for i in part]),
                "is_move": np.stack([records[i].is_move for i in part]),
                "old_logp": np.array([records[i].log_prob for i in part]),
                "adv": adv[part],
                "ret": ret[part],
            }


def ppo_update(state: PolicyState, records: list, config: TrainConfig | None = None, last_value: float = 0.0, rng=None) -> dict:
    """update_epochs passes of clipped-surrogate minibatch steps over a buffer."""
    if not records:
        raise ValueError("cannot update on an empty buffer")
    config = config or state.config
    rng = np.random.default_rng(rng)
    rewards = [r.reward for r in records]
    values = [r.value_estimate for r in records]
    dones = [r.done for r in records]
    adv, ret = compute_gae(rewards, values, dones, config.gamma, config.gae_lambda, last_value)
    adv = adv - adv.mean()
    std = adv.std()
    if std > 0:
        adv = adv / std
    if state.optimizer is None:
        state.optimizer = nn.Adam(state.params, config.learning_rate)
    state.optimizer.lr = config.learning_rate  # the update config wins over the one the state was built with
    cfg = {
        "clip_epsilon": config.clip_epsilon,
        "value_coef": config.value_coef,
        "entropy_coef": config.entropy_coef,
    }
    n = len(records)
    mb = min(config.minibatch_size, n)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "loss": 0.0}
    count = 0
    for _ in range(config.update_epochs):
        perm = rng.permutation(n)
        for s in range(0, n, mb):
            idx = perm[s : s + mb]
            grads = None
            step = dict.fromkeys(sums, 0.0)
            for batch in _batches(records, idx, adv, ret):
                batch["denom"] = len(idx)
                st, g = nn.loss_and_grad(state.params, batch, cfg)
                for k in step:
                    step[k] += st[k]
                if grads is None:
                    grads = g
                else:
                    for k in grads:
                        grads[k] += g[k]
            nn.clip_grad_norm(grads, config.max_grad_norm)
            state.optimizer.step(state.params, grads)
            for k in sums:
                sums[k] += step[k]
            count += 1
    return {k: v / count for k, v in sums.items()}


METRIC_FIELDS = ("episode", "scenario_id", "final_score", "reward_sum", "policy_loss", "value_loss", "entropy")


def train(env_factory, scenarios, config: TrainConfig, state: PolicyState | None = None, on_episode=None):
    """Train on `scenarios`, switching scenario every F_switch episodes.

    Transitions accumulate in a buffer; a PPO update fires whenever it holds
    buffer_size transitions, after which it is emptied. Returns the final
    PolicyState and one metrics dict per episode.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("need at least one training scenario")
    n_meo = scenarios[0].n_meo
    if any(s.n_meo != n_meo for s in scenarios):
        raise ValueError("all training scenarios must share the MEO count")
    ss = np.random.SeedSequence(config.seed)
    init_seed, scen_rng, act_rng, shuffle_rng = ss.spawn(4)
    scen_rng, act_rng, shuffle_rng = (np.random.default_rng(s) for s in (scen_rng, act_rng, shuffle_rng))
    if state is None:
        state = PolicyState.initial(n_meo, config, np.random.default_rng(init_seed))
    env = env_factory() if env_factory is not None else config.make_env()
    buffer = []
    last = {"policy_loss": None, "value_loss": None, "entropy": None}
    log = []
    scenario = None
    for episode in range(1, config.max_episodes + 1):
        if (episode - 1) % config.F_switch == 0:
            scenario = scenarios[int(scen_rng.integers(len(scenarios)))]
        obs = env.reset(scenario)
        reward_sum = 0.0
        done = False
        while not done:
            action, arrays, logp, value = act(state.params, obs, act_rng, env.k_moves)
            allocation = env.allocation
            out = env.step(action)
            done = out.done
            reward_sum += out.reward
            buffer.append(TransitionRecord(scenario, allocation, *arrays, logp, out.reward, value, done))
            obs = out.observation
            if len(buffer) >= config.buffer_size:
                boot = 0.0 if done else state_value(state.params, obs)
                stats = ppo_update(state, buffer, config, boot, shuffle_rng)
                last = {k: stats[k] for k in last}
                buffer = []
        row = {
            "episode": episode,
            "scenario_id": scenario.scenario_id,
            "final_score": env.current_score,
            "reward_sum": reward_sum,
            **last,
        }
        log.append(row)
        if on_episode is not None:
            on_episode(row)
    return state, log


@dataclass
class InferenceResult:
    allocation: Allocation
    score: float
    trace: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    steps: int = 0


def infer(params, scenario: Scenario, max_steps: int = 64, k_moves: int = 1, eval_params=None, early_stop: bool = True) -> InferenceResult:
    """Greedy (argmax) rollout from the scenario's reset allocation.

    Returns the best-scoring allocation seen. With early_stop, the rollout
    ends once an action leaves the allocation unchanged, since a greedy
    policy would then repeat it for the rest of the horizon.
    """
    if isinstance(params, PolicyState):
        params = params.params
    start = time.perf_counter()
    env = ProvisioningEnv(1.0, 0.0, max_steps, k_moves, eval_params)
    obs = env.reset(scenario)
    best_alloc, best = env.allocation, env.current_score
    trace = [best]
    steps = 0
    for _ in range(max_steps):
        action, *_ = act(params, obs, None, k_moves, greedy=True)
        before = env.allocation
        out = env.step(action)
        steps += 1
        obs = out.observation
        trace.append(env.current_score)
        if env.current_score > best:
            best, best_alloc = env.current_score, env.allocation
        if early_stop and env.allocation == before:
            break
    return InferenceResult(best_alloc, best, trace, time.perf_counter() - start, steps)


def save_checkpoint(state: PolicyState, path, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "n_features": state.n_features,
        "n_meo": state.n_meo,
        "shapes": {k: list(v.shape) for k, v in state.params.items()},
        "params": {k: v.ravel().tolist() for k, v in state.params.items()},
    }
    if state.optimizer is not None:
        opt = state.optimizer
        doc["optimizer"] = {
            "t": opt.t,
            "m": {k: v.ravel().tolist() for k, v in opt.m.items()},
            "v": {k: v.ravel().tolist() for k, v in opt.v.items()},
        }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path) -> PolicyState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a policy checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    shapes = doc["shapes"]
    params = {k: np.asarray(v, dtype=float).reshape(shapes[k]) for k, v in doc["params"].items()}
    config = TrainConfig.from_dict(doc["config"])
    state = PolicyState(params, config, int(doc["n_features"]), int(doc["n_meo"]))
    if "optimizer" in doc:
        opt = nn.Adam(params, config.learning_rate)
        opt.t = int(doc["optimizer"]["t"])
        opt.m = {k: np.asarray(v, dtype=float).reshape(shapes[k]) for k, v in doc["optimizer"]["m"].items()}
        opt.v = {k: np.asarray(v, dtype=float).reshape(shapes[k]) for k, v in doc["optimizer"]["v"].items()}
        state.optimizer = opt
    return state
