import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satprov import netmodel as nm
from satprov.env import sample_scenario
from satprov.netmodel import Allocation, EvalParams, MoveEvaluator, evaluate

from conftest import alloc, snapshot_from, traffic_from
from oracles import naive_evaluate, naive_score

C = 299792458.0
R_LEO = 6921e3
R_MEO = 14371e3
ALPHA_TABLE = {  # alpha: (enhanced overhead, enhanced delay, network score)
    0.1: (-0.49, -0.90, -0.53),
    0.3: (-0.55, -0.80, -0.63),
    0.5: (-0.58, -0.76, -0.67),
    0.7: (-0.65, -0.72, -0.70),
    0.9: (-0.79, -0.69, -0.70),
}


def _oracle(sc, a, params=EvalParams()):
    return naive_evaluate(
        sc.snapshot.positions, sc.n_leo, sc.n_meo, a.controller_of, a.senior,
        sc.traffic.volume, sc.traffic.flows, sc.traffic.sync_unit,
        params.c_ospf_s, params.c_bgp_s, params.delay_mode == "per_flow",
    )


def _random_alloc(sc, rng):
    return Allocation(rng.integers(0, sc.n_meo, sc.n_leo), sc.initial_allocation.senior, sc.n_meo)


def _close(res, ref, rel=1e-9):
    for k in ("o_syn", "o_flow", "o_path", "o_total", "d_inter", "d_avg"):
        assert getattr(res, k) == pytest.approx(ref[k], rel=rel, abs=1e-300), k
    np.testing.assert_allclose(res.d_intra, ref["d_intra"], rtol=rel)


# ---- single-domain geometry -------------------------------------------------


def _one_leo_one_meo(vol=0.0):
    snap = snapshot_from([[R_LEO, 0, 0]], [[R_MEO, 0, 0]])
    return snap, traffic_from(np.zeros((1, 1))), alloc([0], 0, 1)


def test_sync_single_domain():
    snap, t, a = _one_leo_one_meo()
    assert nm.sync_overhead(snap, a, t) == pytest.approx((R_MEO - R_LEO) / C)


def test_zero_sync_unit_limit_and_zero_traffic():
    snap = snapshot_from([[R_LEO, 0, 0], [0, R_LEO, 0]], [[R_MEO, 0, 0], [0, R_MEO, 0]])
    t = traffic_from(np.zeros((2, 2)))
    a = alloc([0, 1], 0, 2)
    assert nm.flow_table_overhead(snap, a, t) == 0.0
    # sync with a vanishing unit tends to zero
    tiny = traffic_from(np.zeros((2, 2)), sync_unit=1e-300)
    assert nm.sync_overhead(snap, a, tiny) < 1e-290


def test_one_domain_has_no_inter_terms(small_scenarios):
    sc = small_scenarios[0]
    a = Allocation(np.zeros(sc.n_leo, dtype=np.int64), 0, sc.n_meo)
    p = EvalParams()
    ref = _oracle(sc, a)
    intra_only = 0.0
    pos = sc.snapshot.positions
    for j in range(sc.n_leo):
        for k in range(sc.n_leo):
            intra_only += sc.traffic.volume[j, k] * np.linalg.norm(pos[j] - pos[sc.n_leo]) / C
    assert nm.flow_table_overhead(sc.snapshot, a, sc.traffic) == pytest.approx(intra_only, rel=1e-12)
    d_intra = [nm.intra_delay(sc.snapshot, a, sc.traffic, i) for i in range(sc.n_meo)]
    assert nm.inter_delay(sc.snapshot, a, sc.traffic) == pytest.approx(max(d_intra) + p.c_bgp_s * sc.n_meo**2)
    assert ref["d_inter"] == pytest.approx(max(d_intra) + p.c_bgp_s * sc.n_meo**2)
    assert nm.avg_delay(sc.snapshot, a, sc.traffic) == pytest.approx(d_intra[0], rel=1e-12)


def test_path_overhead_cases():
    a = alloc([2] * 7, 0, 4)
    assert nm.path_overhead(a) == pytest.approx(1e-4 * 7 * math.log2(8) + 1e-3 * 16)
    assert nm.path_overhead(a, EvalParams(c_ospf_s=0, c_bgp_s=0)) == 0.0
    a25 = alloc([0] * 25, 0, 1)
    assert nm.path_overhead(a25, EvalParams(c_bgp_s=0)) == pytest.approx(1.175e-2, rel=1e-3)


def test_intra_delay_cases():
    snap = snapshot_from([[R_LEO, 0, 0], [0, R_LEO, 0]], [[R_MEO, 0, 0], [-R_MEO, 0, 0]])
    t = traffic_from(np.zeros((2, 2)))
    a = alloc([0, 0], 1, 2)
    # empty domain whose controller is the senior: every term vanishes
    assert nm.intra_delay(snap, a, t, 1) == 0.0
    # single-LEO domain without intra traffic
    b = alloc([0, 1], 1, 2)
    expect = 2 * (2 * R_MEO) / C + 1e-4 * 1 * math.log2(2)
    assert nm.intra_delay(snap, b, t, 0) == pytest.approx(expect)
    with pytest.raises(IndexError):
        nm.intra_delay(snap, b, t, 2)


def test_zero_traffic_inter_and_avg():
    sc = sample_scenario(4, 2, 1)
    t = traffic_from(np.zeros((4, 4)))
    a = sc.initial_allocation
    d_intra = [nm.intra_delay(sc.snapshot, a, t, i) for i in range(2)]
    assert nm.inter_delay(sc.snapshot, a, t) == pytest.approx(max(d_intra) + 1e-3 * 4)
    assert nm.avg_delay(sc.snapshot, a, t) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_four_two_matches_oracle(seed):
    sc = sample_scenario(4, 2, seed)
    rng = np.random.default_rng(seed)
    for _ in range(4):
        a = _random_alloc(sc, rng)
        res = evaluate(sc.snapshot, a, sc.traffic)
        ref = _oracle(sc, a)
        _close(res, ref)
        assert nm.sync_overhead(sc.snapshot, a, sc.traffic) == pytest.approx(ref["o_syn"], rel=1e-12)
        assert nm.flow_table_overhead(sc.snapshot, a, sc.traffic) == pytest.approx(ref["o_flow"], rel=1e-12)
        for i in range(2):
            assert nm.intra_delay(sc.snapshot, a, sc.traffic, i) == pytest.approx(ref["d_intra"][i], rel=1e-12)


def test_literal_delay_mode_matches_oracle():
    sc = sample_scenario(6, 3, 4)
    p = EvalParams(delay_mode="literal")
    a = sc.initial_allocation
    _close(evaluate(sc.snapshot, a, sc.traffic, p), _oracle(sc, a, p))


# ---- score -----------------------------------------------------------------


@pytest.mark.parametrize("alpha", sorted(ALPHA_TABLE))
def test_table_one_combiner(alpha):
    o, d, s = ALPHA_TABLE[alpha]
    assert nm.combine(o, d, alpha) == pytest.approx(s, abs=0.015)


def test_score_cases():
    p = EvalParams()
    assert nm.score(1.0, 1.0, p) == p.penalty
    r = 1 - math.exp(-2)
    for a in (0.0, 0.3, 1.0):
        assert nm.score(r, r, p.replace(alpha=a)) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        nm.score(float("nan"), 0.5, p)
    with pytest.raises(ValueError):
        nm.score(0.5, float("inf"), p)


@settings(max_examples=100, deadline=None)
@given(o=st.floats(0.0, 0.999), d=st.floats(0.0, 0.999), alpha=st.floats(0.0, 1.0))
def test_score_matches_reference(o, d, alpha):
    assert nm.score(o, d, EvalParams(alpha=alpha)) == pytest.approx(naive_score(o, d, alpha), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(o1=st.floats(0.01, 0.98), o2=st.floats(0.01, 0.98), d=st.floats(0.01, 0.98), alpha=st.floats(0.0, 0.99))
def test_score_decreasing_in_overhead(o1, o2, d, alpha):
    if o1 == o2:
        return
    lo, hi = sorted((o1, o2))
    p = EvalParams(alpha=alpha)
    assert nm.score(lo, d, p) > nm.score(hi, d, p)


@settings(max_examples=60, deadline=None)
@given(o=st.floats(0.0, 1.5), d=st.floats(0.0, 1.5))
def test_score_affine_in_alpha(o, d):
    s = lambda a: nm.score(o, d, EvalParams(alpha=a))
    assert 2 * s(0.5) == pytest.approx(s(0.0) + s(1.0), abs=1e-12)


def test_alpha_zero_is_overhead_term():
    assert nm.score(0.4, 0.9, EvalParams(alpha=0.0)) == pytest.approx(math.log(0.6) / 2)


# ---- evaluate ----------------------------------------------------------------


def test_self_baseline_is_penalty(small_scenarios):
    for sc in small_scenarios:
        base = evaluate(sc.snapshot, sc.initial_allocation, sc.traffic)
        res = evaluate(sc.snapshot, sc.initial_allocation, sc.traffic, baseline=base)
        assert res.o_ratio == res.d_ratio == 1.0
        assert res.score == EvalParams().penalty


def test_zero_baseline_rejected(small_scenarios):
    sc = small_scenarios[0]
    base = evaluate(sc.snapshot, sc.initial_allocation, sc.traffic)
    broken = nm.EvalResult(0.0, 0.0, 0.0, 0.0, np.zeros(2), 0.0, 1.0)
    with pytest.raises(ValueError):
        evaluate(sc.snapshot, sc.initial_allocation, sc.traffic, baseline=broken)
    assert base.o_total > 0


def test_less_cross_traffic_never_raises_flow_overhead():
    sc = sample_scenario(6, 3, 2)
    a = sc.initial_allocation
    c = a.controller_of
    v = sc.traffic.volume.copy()
    cross = c[:, None] != c[None, :]
    cut = v.copy()
    cut[cross] *= 0.5
    f = (cut > 0).astype(int)
    before = nm.flow_table_overhead(sc.snapshot, a, traffic_from(v, f))
    after = nm.flow_table_overhead(sc.snapshot, a, traffic_from(cut, f))
    assert after <= before


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n_leo=st.integers(2, 8), n_meo=st.integers(1, 3))
def test_invariants(seed, n_leo, n_meo):
    sc = sample_scenario(n_leo, n_meo, seed)
    rng = np.random.default_rng(seed)
    a = _random_alloc(sc, rng)
    res = evaluate(sc.snapshot, a, sc.traffic)
    assert res.o_total == res.o_syn + res.o_flow + res.o_path
    assert min(res.o_syn, res.o_flow, res.o_path, res.d_inter, res.d_avg) >= 0
    assert (res.d_intra >= 0).all()
    _close(res, _oracle(sc, a))


def test_result_json_fields(small_scenarios):
    d = small_scenarios[0].evaluate(small_scenarios[0].initial_allocation).to_dict()
    for k in ("o_syn", "o_flow", "o_path", "o_total", "d_intra", "d_inter", "d_avg", "o_ratio", "d_ratio", "score"):
        assert k in d


def test_allocation_validation():
    with pytest.raises(ValueError):
        Allocation(np.array([0, 3]), 0, 3)
    with pytest.raises(ValueError):
        Allocation(np.array([0, 1]), 5, 3)
    a = Allocation(np.array([0, 2, 2]), 1, 3)
    assert a == Allocation.from_dict(a.to_dict())
    assert list(a.domain_sizes()) == [1, 0, 2]


@pytest.mark.parametrize("seed", range(4))
def test_move_evaluator_exact(seed):
    sc = sample_scenario(7, 3, seed)
    mv = MoveEvaluator(sc.snapshot, sc.traffic, sc.params, sc.baseline)
    rng = np.random.default_rng(seed)
    a = _random_alloc(sc, rng)
    table = mv.scores(a)
    for j in range(sc.n_leo):
        for b in range(sc.n_meo):
            if b == a.controller_of[j]:
                continue
            assert table[j, b] == pytest.approx(sc.evaluate(a.with_moves([(j, b)])).score, rel=1e-9, abs=1e-12)


def test_medoid_senior():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [10, 0, 0]])
    assert nm.medoid(pts) == 1
