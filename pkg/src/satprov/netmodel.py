"""Overhead, delay and score of a controller allocation.

All functions are pure over immutable inputs. Costs are products of traffic
volume (Mb) and light time (s); only their ratios against a baseline
allocation enter the score.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .constellation import V_LIGHT

PER_FLOW = "per_flow"
LITERAL = "literal"


@dataclass(frozen=True)
class Allocation:
    controller_of: np.ndarray
    senior: int
    n_meo: int

    def __post_init__(self):
        c = np.asarray(self.controller_of, dtype=np.int64).copy()
        c.setflags(write=False)
        if c.ndim != 1:
            raise ValueError("controller_of must be a vector")
        if self.n_meo < 1:
            raise ValueError("n_meo must be >= 1")
        if c.size and (c.min() < 0 or c.max() >= self.n_meo):
            raise ValueError("controller index out of range")
        if not 0 <= self.senior < self.n_meo:
            raise ValueError("senior is not a valid MEO index")
        object.__setattr__(self, "controller_of", c)

    @property
    def n_leo(self) -> int:
        return self.controller_of.size

    def domain(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.controller_of == i)

    def domain_sizes(self) -> np.ndarray:
        return np.bincount(self.controller_of, minlength=self.n_meo)

    def onehot(self) -> np.ndarray:
        m = np.zeros((self.n_leo, self.n_meo))
        m[np.arange(self.n_leo), self.controller_of] = 1.0
        return m

    def with_moves(self, moves) -> "Allocation":
        c = self.controller_of.copy()
        for leo, meo in moves:
            c[leo] = meo
        return Allocation(c, self.senior, self.n_meo)

    def key(self) -> tuple:
        return tuple(self.controller_of.tolist())

    def __eq__(self, other):
        if not isinstance(other, Allocation):
            return NotImplemented
        return (
            self.senior == other.senior
            and self.n_meo == other.n_meo
            and np.array_equal(self.controller_of, other.controller_of)
        )

    def __hash__(self):
        return hash((self.key(), self.senior, self.n_meo))

    def to_dict(self) -> dict:
        return {"controller_of": self.controller_of.tolist(), "senior": int(self.senior), "n_meo": int(self.n_meo)}

    @classmethod
    def from_dict(cls, d: dict) -> "Allocation":
        return cls(np.asarray(d["controller_of"], dtype=np.int64), int(d["senior"]), int(d["n_meo"]))


@dataclass(frozen=True)
class EvalParams:
    alpha: float = 0.5
    c_ospf_s: float = 1e-4
    c_bgp_s: float = 1e-3
    penalty: float = -5.0
    eps_clip: float = 1e-6
    delay_mode: str = PER_FLOW

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.penalty < 0:
            raise ValueError("penalty must be negative")
        if not 0.0 < self.eps_clip < 1.0:
            raise ValueError("eps_clip must lie in (0, 1)")
        if self.c_ospf_s < 0 or self.c_bgp_s < 0:
            raise ValueError("path computation coefficients must be non-negative")
        if self.delay_mode not in (PER_FLOW, LITERAL):
            raise ValueError(f"unknown delay_mode {self.delay_mode!r}")

    def replace(self, **kw) -> "EvalParams":
        return EvalParams(**{**asdict(self), **kw})


@dataclass(frozen=True)
class EvalResult:
    o_syn: float
    o_flow: float
    o_path: float
    o_total: float
    d_intra: np.ndarray = field(repr=False)
    d_inter: float = 0.0
    d_avg: float = 0.0
    o_ratio: float = 1.0
    d_ratio: float = 1.0
    term_o: float = 0.0
    term_d: float = 0.0
    score: float = 0.0

    def to_dict(self) -> dict:
        d = {k: float(v) for k, v in asdict(self).items() if k != "d_intra"}
        d["d_intra"] = [float(x) for x in self.d_intra]
        return d


def medoid(points: np.ndarray) -> int:
    """Index minimizing total distance to the other points; ties to lowest."""
    diff = points[:, None, :] - points[None, :, :]
    return int(np.argmin(np.sqrt((diff**2).sum(-1)).sum(1)))


def senior_of(snapshot) -> int:
    return medoid(snapshot.meo_positions)


class _Geometry:
    __slots__ = ("leo_meo", "meo_meo")

    def __init__(self, snapshot):
        self.leo_meo = snapshot.leo_meo_distances() / V_LIGHT
        self.meo_meo = snapshot.meo_meo_distances() / V_LIGHT


def geometry(snapshot) -> _Geometry:
    """Light-time tables for a snapshot, cached on the snapshot object."""
    cache = getattr(snapshot, "_geom", None)
    if cache is None:
        cache = _Geometry(snapshot)
        object.__setattr__(snapshot, "_geom", cache)
    return cache


def _check(snapshot, allocation, traffic=None):
    if allocation.n_leo != snapshot.n_leo or allocation.n_meo != snapshot.n_meo:
        raise ValueError("allocation does not match snapshot dimensions")
    if traffic is not None and traffic.n_leo != snapshot.n_leo:
        raise ValueError("traffic does not match snapshot dimensions")


class _Parts:
    """Intermediate sums shared by every overhead and delay term."""

    def __init__(self, snapshot, allocation, traffic, params):
        _check(snapshot, allocation, traffic)
        g = geometry(snapshot)
        c = allocation.controller_of
        n_meo = allocation.n_meo
        self.sizes = np.bincount(c, minlength=n_meo).astype(float)
        self.ts = traffic.sync_unit * self.sizes
        self.ts_senior = traffic.sync_unit * n_meo
        self.to_ctrl = g.leo_meo[np.arange(c.size), c]
        self.to_senior = g.meo_meo[:, allocation.senior]
        self.max_to_ctrl = np.zeros(n_meo)
        np.maximum.at(self.max_to_ctrl, c, self.to_ctrl)
        same = c[:, None] == c[None, :]
        T = traffic.volume
        row_intra = np.where(same, T, 0.0).sum(1)
        row_out = T.sum(1) - row_intra
        self.intra = np.bincount(c, weights=row_intra * self.to_ctrl, minlength=n_meo)
        self.out = np.bincount(c, weights=row_out, minlength=n_meo)
        self.cross = self.out * self.to_senior
        self.dp = params.c_ospf_s * self.sizes * np.log2(self.sizes + 1.0)
        self.dp_star = params.c_bgp_s * n_meo**2
        f = traffic.flows
        f_row = f.sum(1).astype(float)
        f_out = f_row - np.where(same, f, 0).sum(1)
        self.flow_from = np.bincount(c, weights=f_row, minlength=n_meo)
        self.flow_cross = float(f_out.sum())
        self.flow_total = float(f_row.sum())


def sync_overhead(snapshot, allocation, traffic, params=None) -> float:
    p = _Parts(snapshot, allocation, traffic, params or EvalParams())
    return float(p.ts @ p.max_to_ctrl + p.ts_senior * p.to_senior.max())


def flow_table_overhead(snapshot, allocation, traffic, params=None) -> float:
    p = _Parts(snapshot, allocation, traffic, params or EvalParams())
    return float(p.intra.sum() + p.cross.sum())


def path_overhead(allocation, params=None) -> float:
    params = params or EvalParams()
    sizes = allocation.domain_sizes().astype(float)
    return float((params.c_ospf_s * sizes * np.log2(sizes + 1.0)).sum() + params.c_bgp_s * allocation.n_meo**2)


def _intra_vector(p: _Parts) -> np.ndarray:
    return p.ts_senior * p.to_senior + p.dp + p.intra


def intra_delay(snapshot, allocation, traffic, i: int, params=None) -> float:
    if not 0 <= i < allocation.n_meo:
        raise IndexError(f"controller index {i} out of range")
    p = _Parts(snapshot, allocation, traffic, params or EvalParams())
    return float(_intra_vector(p)[i])


def _inter(p: _Parts, d_intra: np.ndarray) -> float:
    return float(d_intra.max() + p.cross.sum() + p.dp_star)


def inter_delay(snapshot, allocation, traffic, params=None) -> float:
    p = _Parts(snapshot, allocation, traffic, params or EvalParams())
    return _inter(p, _intra_vector(p))


def _avg(p: _Parts, d_intra, d_inter, mode) -> float:
    if p.flow_total == 0:
        return 0.0
    charged = p.flow_cross if mode == PER_FLOW else p.flow_total
    return float((p.flow_from @ d_intra + charged * d_inter) / p.flow_total)


def avg_delay(snapshot, allocation, traffic, params=None) -> float:
    params = params or EvalParams()
    p = _Parts(snapshot, allocation, traffic, params)
    d_intra = _intra_vector(p)
    return _avg(p, d_intra, _inter(p, d_intra), params.delay_mode)


def enhancement(ratio: float, params: EvalParams) -> float:
    """Log-improvement term for one cost ratio, or the penalty when the
    ratio shows no improvement."""
    if not math.isfinite(ratio):
        raise ValueError(f"non-finite cost ratio {ratio}")
    if ratio <= 1.0 - params.eps_clip:
        return math.log(1.0 - ratio) / 2.0
    return params.penalty


def combine(term_o: float, term_d: float, alpha: float) -> float:
    return (1.0 - alpha) * term_o + alpha * term_d


def score(o_ratio: float, d_ratio: float, params: EvalParams) -> float:
    return combine(enhancement(o_ratio, params), enhancement(d_ratio, params), params.alpha)


def evaluate(snapshot, allocation, traffic, params: EvalParams | None = None, baseline: EvalResult | None = None) -> EvalResult:
    params = params or EvalParams()
    p = _Parts(snapshot, allocation, traffic, params)
    o_syn = float(p.ts @ p.max_to_ctrl + p.ts_senior * p.to_senior.max())
    o_flow = float(p.intra.sum() + p.cross.sum())
    o_path = float(p.dp.sum() + p.dp_star)
    o_total = o_syn + o_flow + o_path
    d_intra = _intra_vector(p)
    d_inter = _inter(p, d_intra)
    d_avg = _avg(p, d_intra, d_inter, params.delay_mode)
    if baseline is None:
        o_ratio = d_ratio = 1.0
    else:
        if baseline.o_total <= 0 or baseline.d_avg <= 0:
            raise ValueError("baseline has zero overhead or delay; ratios are undefined")
        o_ratio = o_total / baseline.o_total
        d_ratio = d_avg / baseline.d_avg
    term_o = enhancement(o_ratio, params)
    term_d = enhancement(d_ratio, params)
    return EvalResult(
        o_syn, o_flow, o_path, o_total, d_intra, d_inter, d_avg,
        o_ratio, d_ratio, term_o, term_d, combine(term_o, term_d, params.alpha),
    )


class MoveEvaluator:
    """Scores every single reassignment (leo -> meo) of an allocation at once.

    Uses per-domain aggregates so that one call costs O(N_L^2 N_M) for the
    aggregate products and O(N_L N_M) afterwards, instead of one full
    evaluation per candidate.
    """

    def __init__(self, snapshot, traffic, params: EvalParams, baseline: EvalResult):
        self.snapshot = snapshot
        self.traffic = traffic
        self.params = params
        self.baseline = baseline
        self.g = geometry(snapshot)

    def totals(self, allocation):
        """(o_total, d_avg) for every candidate move, each (N_L, N_M)."""
        params, tr = self.params, self.traffic
        p = _Parts(self.snapshot, allocation, tr, params)
        c = allocation.controller_of
        n_leo, n_meo = c.size, allocation.n_meo
        rows = np.arange(n_leo)
        S = self.g.leo_meo
        M = allocation.onehot()
        T, F = tr.volume, tr.flows.astype(float)
        R = T @ M
        Cu = T.T @ M
        Cw = T.T @ (M * S)
        Fr = F @ M
        Fc = F.T @ M
        row_sum = T.sum(1)
        f_row = F.sum(1)

        a = c
        sz = p.sizes
        n_a = sz[a][:, None]
        n_b = sz[None, :]

        # second-largest light time per domain, for removing the farthest member
        top1 = p.max_to_ctrl
        masked = np.where(p.to_ctrl == top1[a], -np.inf, p.to_ctrl)
        # members tied with the max keep it after one of them leaves
        ties = np.bincount(a, weights=(p.to_ctrl == top1[a]).astype(float), minlength=n_meo)
        top2 = np.zeros(n_meo)
        np.maximum.at(top2, a, np.where(np.isfinite(masked), masked, 0.0))
        top2 = np.where(ties > 1, top1, top2)
        max_a_new = np.where(p.to_ctrl == top1[a], top2[a], top1[a])[:, None]
        max_b_new = np.maximum(top1[None, :], S)

        u = tr.sync_unit
        syn_base = float(p.ts @ p.max_to_ctrl + p.ts_senior * p.to_senior.max())
        syn = syn_base + u * (
            (n_a - 1) * max_a_new - n_a * top1[a][:, None] + (n_b + 1) * max_b_new - n_b * top1[None, :]
        )

        intra_a_new = (p.intra[a] - R[rows, a] * p.to_ctrl - Cw[rows, a])[:, None]
        intra_b_new = p.intra[None, :] + R * S + Cw
        out_a_new = (p.out[a] - row_sum + R[rows, a] + Cu[rows, a])[:, None]
        out_b_new = p.out[None, :] + row_sum[:, None] - R - Cu
        ms = p.to_senior
        flow = (
            p.intra.sum() + p.cross.sum()
            + (intra_a_new - p.intra[a][:, None]) + (intra_b_new - p.intra[None, :])
            + (out_a_new - p.out[a][:, None]) * ms[a][:, None] + (out_b_new - p.out[None, :]) * ms[None, :]
        )
        c_o = params.c_ospf_s
        dp = lambda n: c_o * n * np.log2(n + 1.0)  # noqa: E731
        dp_a_new = dp(n_a - 1)
        dp_b_new = dp(n_b + 1)
        path = p.dp.sum() + p.dp_star + (dp_a_new - p.dp[a][:, None]) + (dp_b_new - p.dp[None, :])
        o_total = syn + flow + path

        d_intra = _intra_vector(p)
        base = p.ts_senior * ms
        di_a = base[a][:, None] + dp_a_new + intra_a_new
        di_b = base[None, :] + dp_b_new + intra_b_new
        # max over controllers other than a and b
        order = np.argsort(-d_intra, kind="stable")
        top3 = order[:3]
        excl = np.full((n_meo, n_meo), -np.inf)
        for x in range(n_meo):
            for y in range(n_meo):
                for k in top3:
                    if k != x and k != y:
                        excl[x, y] = d_intra[k]
                        break
        max_other = excl[a][:, :]  # (N_L, N_M) indexed [j, b]
        d_max = np.maximum(np.maximum(max_other, di_a), di_b)
        cross_new = p.cross.sum() + (out_a_new - p.out[a][:, None]) * ms[a][:, None] + (out_b_new - p.out[None, :]) * ms[None, :]
        d_inter = d_max + cross_new + p.dp_star

        if p.flow_total == 0:
            d_avg = np.zeros_like(o_total)
        else:
            fi = p.flow_from
            weighted = fi @ d_intra
            fa_new = (fi[a] - f_row)[:, None]
            fb_new = fi[None, :] + f_row[:, None]
            num = (
                weighted
                - fi[a][:, None] * d_intra[a][:, None] - fi[None, :] * d_intra[None, :]
                + fa_new * di_a + fb_new * di_b
            )
            if params.delay_mode == PER_FLOW:
                cross_flows = p.flow_cross + (Fr[rows, a] + Fc[rows, a])[:, None] - Fr - Fc
            else:
                cross_flows = np.full_like(o_total, p.flow_total)
            d_avg = (num + cross_flows * d_inter) / p.flow_total

        # staying put is not a move; report the current totals there
        cur_o = syn_base + p.intra.sum() + p.cross.sum() + p.dp.sum() + p.dp_star
        cur_d = _avg(p, d_intra, _inter(p, d_intra), params.delay_mode)
        o_total[rows, a] = cur_o
        d_avg[rows, a] = cur_d
        return o_total, d_avg

    def scores(self, allocation) -> np.ndarray:
        o_total, d_avg = self.totals(allocation)
        params = self.params
        o_r = o_total / self.baseline.o_total
        d_r = d_avg / self.baseline.d_avg
        return combine(self._terms(o_r), self._terms(d_r), params.alpha)

    def _terms(self, ratio: np.ndarray) -> np.ndarray:
        params = self.params
        ok = ratio <= 1.0 - params.eps_clip
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.log(1.0 - np.where(ok, ratio, 0.0)) / 2.0
        return np.where(ok, val, params.penalty)
