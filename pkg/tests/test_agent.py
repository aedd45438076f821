import math

import numpy as np
import pytest

from satprov.agent import network as nn
from satprov.agent.ppo import (
    PolicyState,
    TrainConfig,
    act,
    compute_gae,
    infer,
    load_checkpoint,
    ppo_update,
    save_checkpoint,
    train,
)
from satprov.constellation import build_constellation, default_shells, propagate
from satprov.env import ProvisioningEnv, Scenario, encode, node_feature_dim, sample_scenario
from satprov.netmodel import Allocation, EvalParams, EvalResult
from satprov.traffic import TrafficScenario

from agent_helpers import make_batch, rollout_records
from oracles import block_rel_error, central_difference

CFG = dict(clip_epsilon=0.2, policy_coef=1.0, value_coef=0.5, entropy_coef=0.01)


def _graph(n=7, f=5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, f))
    adj = rng.random((n, n)) < 0.4
    adj = adj | adj.T
    np.fill_diagonal(adj, False)
    return x, adj


def test_zero_weights_give_activation_of_zero():
    x, adj = _graph()
    p = nn.init_params(5, 3, 8, 1, 0)
    for k in p:
        p[k] = np.zeros_like(p[k])
    emb, pooled = nn.encode_graph(p, x, nn.normalize_adjacency(adj))
    assert not emb.any() and not pooled.any()
    v, _ = nn.value_forward(p, pooled)
    assert v == 0.0


def test_permutation_equivariance():
    x, adj = _graph()
    p = nn.init_params(5, 3, 8, 2, 1)
    perm = np.random.default_rng(3).permutation(len(x))
    emb, pooled = nn.encode_graph(p, x, nn.normalize_adjacency(adj))
    emb2, pooled2 = nn.encode_graph(p, x[perm], nn.normalize_adjacency(adj[np.ix_(perm, perm)]))
    np.testing.assert_allclose(emb2, emb[perm], atol=1e-12)
    np.testing.assert_allclose(pooled2, pooled, atol=1e-12)
    assert nn.value_forward(p, pooled2)[0] == pytest.approx(nn.value_forward(p, pooled)[0], abs=1e-12)


def test_leo_logits_equivariant():
    x, adj = _graph(n=6)
    p = nn.init_params(5, 2, 8, 2, 4)
    n_leo = 4
    perm = np.r_[np.random.default_rng(0).permutation(n_leo), 4, 5]
    emb, pooled = nn.encode_graph(p, x, nn.normalize_adjacency(adj))
    z, _ = nn.leo_logits(p, emb, pooled, n_leo)
    emb2, pooled2 = nn.encode_graph(p, x[perm], nn.normalize_adjacency(adj[np.ix_(perm, perm)]))
    z2, _ = nn.leo_logits(p, emb2, pooled2, n_leo)
    np.testing.assert_allclose(z2[:n_leo], z[perm[:n_leo]], atol=1e-12)
    assert z2[-1] == pytest.approx(z[-1], abs=1e-12)


def test_masked_softmax():
    mask = np.array([True, False, True, True])
    p = nn.softmax(np.zeros(4), mask)
    np.testing.assert_allclose(p, [1 / 3, 0, 1 / 3, 1 / 3])
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.normal(size=9) * 5
        m = rng.random(9) < 0.7
        m[0] = True
        assert nn.softmax(z, m).sum() == pytest.approx(1.0, abs=1e-9)


def test_entropy_bound():
    rng = np.random.default_rng(1)
    for n in (1, 2, 5, 11):
        assert nn.entropy(nn.log_softmax(np.zeros(n))) == pytest.approx(math.log(n))
        for _ in range(10):
            assert nn.entropy(nn.log_softmax(rng.normal(size=n) * 3)) <= math.log(n) + 1e-12


def test_sampling_reproducible():
    sc = sample_scenario(5, 3, 2)
    p = nn.init_params(node_feature_dim(3), 3, 8, 2, 0)
    obs = encode(sc.initial_allocation, sc)
    a = [act(p, obs, np.random.default_rng(9))[0] for _ in range(3)]
    b = [act(p, obs, np.random.default_rng(9))[0] for _ in range(3)]
    assert a == b


def test_greedy_never_picks_current_controller():
    sc = sample_scenario(6, 3, 1)
    p = nn.init_params(node_feature_dim(3), 3, 8, 2, 5)
    obs = encode(sc.initial_allocation, sc)
    action, *_ = act(p, obs, greedy=True)
    for j, i in action.moves:
        assert sc.initial_allocation.controller_of[j] != i


# ---- gradients ---------------------------------------------------------------


@pytest.mark.parametrize(
    "coefs",
    [
        dict(policy_coef=1.0, value_coef=0.0, entropy_coef=0.0),
        dict(policy_coef=0.0, value_coef=1.0, entropy_coef=0.0),
        dict(policy_coef=0.0, value_coef=0.0, entropy_coef=1.0),
        dict(policy_coef=1.0, value_coef=0.5, entropy_coef=0.01),
    ],
)
@pytest.mark.parametrize("k_moves", [1, 2])
def test_gradient_matches_finite_differences(coefs, k_moves):
    params, records, rng = rollout_records(n_steps=8, hidden=6, k_moves=k_moves, seed=k_moves)
    batch = make_batch(records, rng)
    cfg = {"clip_epsilon": 0.2, **coefs}
    _, grads = nn.loss_and_grad(params, batch, cfg)
    num = central_difference(lambda p: nn.loss_and_grad(p, batch, cfg, need_grad=False)[0]["loss"], params)
    errs = block_rel_error(grads, num)
    assert max(errs.values()) < 1e-4, errs


# ---- GAE ---------------------------------------------------------------------


def test_gae_lambda_zero_is_td_error():
    r, v = [1.0, -2.0, 0.5], [0.3, 0.1, -0.4]
    adv, ret = compute_gae(r, v, [False, False, True], 0.9, 0.0)
    np.testing.assert_allclose(adv, [1 + 0.9 * 0.1 - 0.3, -2 + 0.9 * -0.4 - 0.1, 0.5 + 0.4])
    np.testing.assert_allclose(ret, adv + v)


def test_gae_monte_carlo_limit():
    r = [1.0, 2.0, 3.0, 4.0]
    adv, _ = compute_gae(r, [0.0] * 4, [False] * 3 + [True], 1.0, 1.0)
    np.testing.assert_allclose(adv, [10, 9, 7, 4])


def test_gae_three_step_hand():
    g, l = 0.9, 0.8
    r, v = [1.0, 0.0, 2.0], [0.5, 1.0, 1.5]
    d2 = 2.0 - 1.5
    d1 = 0.0 + g * 1.5 - 1.0
    d0 = 1.0 + g * 1.0 - 0.5
    a2 = d2
    a1 = d1 + g * l * a2
    a0 = d0 + g * l * a1
    adv, _ = compute_gae(r, v, [False, False, True], g, l)
    np.testing.assert_allclose(adv, [a0, a1, a2])


def test_gae_bootstrap_and_episode_cut():
    adv, _ = compute_gae([1.0, 1.0], [0.0, 0.0], [True, False], 0.5, 1.0, last_value=2.0)
    np.testing.assert_allclose(adv, [1.0, 2.0])


# ---- PPO loss ----------------------------------------------------------------


def test_identity_ratio_policy_loss():
    params, records, rng = rollout_records(n_steps=10, hidden=8)
    batch = make_batch(records, rng, logp_noise=0.0)
    st, _ = nn.loss_and_grad(params, batch, CFG)
    np.testing.assert_allclose(st["ratio"], 1.0, atol=1e-9)
    assert st["policy_loss"] == pytest.approx(-batch["adv"].mean(), abs=1e-12)


def test_unclipped_when_ratio_close():
    params, records, rng = rollout_records(n_steps=10, hidden=8)
    batch = make_batch(records, rng, logp_noise=0.0)
    batch["old_logp"] = batch["old_logp"] - 0.05
    st, _ = nn.loss_and_grad(params, batch, CFG)
    assert np.all(np.abs(st["ratio"] - 1) < 0.2)
    assert st["policy_loss"] == pytest.approx(-(st["ratio"] * batch["adv"]).mean(), abs=1e-12)


def test_single_transition_hand_value():
    params, records, rng = rollout_records(n_steps=1, hidden=8)
    batch = make_batch(records, rng, logp_noise=0.0)
    batch["old_logp"] = batch["old_logp"] - 0.5  # ratio e^0.5, outside the clip band
    batch["adv"] = np.array([2.0])
    batch["ret"] = np.array([0.25])
    cfg = dict(clip_epsilon=0.2, value_coef=0.5, entropy_coef=0.0)
    st, _ = nn.loss_and_grad(params, batch, cfg)
    v = st["value"][0]
    assert st["loss"] == pytest.approx(-1.2 * 2.0 + 0.5 * (0.25 - v) ** 2, rel=1e-12)


def test_empty_buffer_rejected():
    state = PolicyState.initial(3, TrainConfig(hidden_dim=8))
    with pytest.raises(ValueError):
        ppo_update(state, [])


def test_update_changes_params_and_reports_stats():
    params, records, _ = rollout_records(n_steps=16, hidden=8)
    cfg = TrainConfig(hidden_dim=8, buffer_size=16, minibatch_size=8, learning_rate=1e-2)
    state = PolicyState(dict((k, v.copy()) for k, v in params.items()), cfg, node_feature_dim(3), 3)
    stats = ppo_update(state, records, cfg, rng=0)
    assert set(stats) >= {"policy_loss", "value_loss", "entropy"}
    assert any(not np.array_equal(state.params[k], params[k]) for k in params)


# ---- training / inference ------------------------------------------------------


SMALL = TrainConfig(max_episodes=12, max_steps=4, buffer_size=16, minibatch_size=8, hidden_dim=8, F_switch=3)


def test_train_log_rows_and_switching():
    scs = [sample_scenario(4, 2, s) for s in range(6)]
    _, log = train(None, scs, SMALL)
    assert [r["episode"] for r in log] == list(range(1, 13))
    ids = [r["scenario_id"] for r in log]
    assert all(ids[i] == ids[i - i % 3] for i in range(12))
    _, log1 = train(None, scs, SMALL.replace(F_switch=1))
    assert len({r["scenario_id"] for r in log1}) > 1


def test_train_seed_determinism():
    scs = [sample_scenario(4, 2, s) for s in range(3)]
    _, a = train(None, scs, SMALL)
    _, b = train(None, scs, SMALL)
    assert a == b


def test_zero_learning_rate_keeps_params():
    scs = [sample_scenario(4, 2, 0)]
    init = PolicyState.initial(2, SMALL, 0)
    before = {k: v.copy() for k, v in init.params.items()}
    state, _ = train(None, scs, SMALL.replace(learning_rate=0.0), state=init)
    for k in before:
        assert state.params[k].tobytes() == before[k].tobytes()


def test_train_input_errors():
    with pytest.raises(ValueError):
        train(None, [], SMALL)
    with pytest.raises(ValueError):
        train(None, [sample_scenario(4, 2, 0), sample_scenario(4, 3, 0)], SMALL)


def _trivial_scenario():
    snap = propagate(build_constellation(*default_shells(1, 1)), 0)
    traffic = TrafficScenario(np.zeros((1, 1)), np.zeros((1, 1), dtype=np.int64))
    a = Allocation(np.zeros(1, dtype=np.int64), 0, 1)
    # one LEO carries no flows, so build the normalizer by hand
    base = EvalResult(1.0, 0.0, 0.0, 1.0, np.zeros(1), 1.0, 1.0)
    return Scenario(snap, traffic, a, base, EvalParams())


def test_infer_trivial_scenario():
    sc = _trivial_scenario()
    p = nn.init_params(node_feature_dim(1), 1, 8, 2, 0)
    r = infer(p, sc, 5)
    assert r.allocation == sc.initial_allocation


def test_infer_best_visited_and_timing():
    sc = sample_scenario(6, 3, 3)
    p = nn.init_params(node_feature_dim(3), 3, 8, 2, 11)
    r = infer(p, sc, 10, early_stop=False)
    assert r.score >= r.trace[0]
    assert r.score == max(r.trace)
    assert r.wall_clock_s >= 0 and r.steps == 10


def test_infer_large_instance_completes():
    sc = sample_scenario(500, 20, 0)
    p = nn.init_params(node_feature_dim(20), 20, 16, 2, 0)
    r = infer(p, sc, 2, early_stop=False)
    assert r.wall_clock_s > 0 and len(r.trace) == 3


def test_checkpoint_round_trip(tmp_path):
    scs = [sample_scenario(4, 2, 0)]
    state, _ = train(None, scs, SMALL)
    save_checkpoint(state, tmp_path / "ck.json")
    back = load_checkpoint(tmp_path / "ck.json")
    assert back.config == state.config
    for k in state.params:
        np.testing.assert_array_equal(back.params[k], state.params[k])
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "bad.json")


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(buffer_size=100, minibatch_size=64)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"nope": 1})
