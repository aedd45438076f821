"""Mean-aggregation graph encoder with policy and value MLP heads.

Everything is batched over a leading axis and differentiated by hand. The
policy is factorized: a LEO-or-STOP head scores each LEO embedding (plus a
STOP logit from the pooled embedding), and an MEO head scores controllers
from the pooled embedding concatenated with the chosen LEO's embedding.
A transition may hold up to K (leo, meo) sub-choices sharing one encoding.
"""
from __future__ import annotations

import numpy as np


def init_params(n_features: int, n_meo: int, hidden_dim: int = 64, n_layers: int = 2, rng=None) -> dict:
    if n_layers < 1:
        raise ValueError("the encoder needs at least one layer")
    rng = np.random.default_rng(rng)
    h = hidden_dim

    def glorot(fan_in, fan_out, gain=1.0):
        lim = gain * np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    p = {}
    d_in = n_features
    for l in range(n_layers):
        p[f"enc{l}.W_self"] = glorot(d_in, h)
        p[f"enc{l}.W_nbr"] = glorot(d_in, h)
        p[f"enc{l}.b"] = np.zeros(h)
        d_in = h
    # output layers start small so the initial policy is near uniform
    p["leo.W1"] = glorot(2 * h, h)
    p["leo.b1"] = np.zeros(h)
    p["leo.w2"] = glorot(h, 1, 0.01)[:, 0]
    p["leo.b2"] = np.zeros(1)
    p["stop.w"] = glorot(h, 1, 0.01)[:, 0]
    p["stop.b"] = np.zeros(1)
    p["meo.W1"] = glorot(2 * h, h)
    p["meo.b1"] = np.zeros(h)
    p["meo.W2"] = glorot(h, n_meo, 0.01)
    p["meo.b2"] = np.zeros(n_meo)
    p["val.W1"] = glorot(h, h)
    p["val.b1"] = np.zeros(h)
    p["val.w2"] = glorot(h, 1)[:, 0]
    p["val.b2"] = np.zeros(1)
    return p


def n_layers_of(params: dict) -> int:
    return sum(1 for k in params if k.endswith(".W_self"))


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Row-normalize so that A @ H is the neighbor mean; isolated rows stay zero."""
    a = adj.astype(float)
    deg = a.sum(-1, keepdims=True)
    return a / np.maximum(deg, 1.0)


# -- forward ---------------------------------------------------------------


def encode_graph(params: dict, x: np.ndarray, a_norm: np.ndarray, cache: list | None = None):
    """L rounds of h' = tanh(h W_self + mean_nbr(h) W_nbr + b).

    Returns per-node embeddings and their mean over nodes. Works on a single
    graph (N, F) or a batch (B, N, F).
    """
    h = x
    for l in range(n_layers_of(params)):
        agg = a_norm @ h
        out = np.tanh(h @ params[f"enc{l}.W_self"] + agg @ params[f"enc{l}.W_nbr"] + params[f"enc{l}.b"])
        if cache is not None:
            cache.append((h, agg, out))
        h = out
    return h, h.mean(axis=-2)


def leo_logits(params, emb, pooled, n_leo):
    """(..., n_leo + 1) logits; the last entry is STOP."""
    e = emb[..., :n_leo, :]
    u = np.concatenate([e, np.broadcast_to(pooled[..., None, :], e.shape)], axis=-1)
    g = np.tanh(u @ params["leo.W1"] + params["leo.b1"])
    s = g @ params["leo.w2"] + params["leo.b2"][0]
    stop = pooled @ params["stop.w"] + params["stop.b"][0]
    return np.concatenate([s, stop[..., None]], axis=-1), (u, g)


def meo_logits(params, pooled, chosen):
    v = np.concatenate([pooled, chosen], axis=-1)
    g = np.tanh(v @ params["meo.W1"] + params["meo.b1"])
    return g @ params["meo.W2"] + params["meo.b2"], (v, g)


def value_forward(params, pooled):
    g = np.tanh(pooled @ params["val.W1"] + params["val.b1"])
    return g @ params["val.w2"] + params["val.b2"][0], g


def log_softmax(z: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z, mask=None):
    return np.exp(log_softmax(z, mask))


def _plogp(logp):
    # masked entries carry logp = -inf and contribute zero
    return np.exp(logp) * np.where(np.isfinite(logp), logp, 0.0)


def entropy(logp: np.ndarray) -> np.ndarray:
    return -_plogp(logp).sum(-1)


# -- loss with gradients ---------------------------------------------------


def _entropy_grad(logp, coef):
    """d(coef * H)/dz for H the entropy of softmax(z) given log-probs."""
    p = np.exp(logp)
    plogp = _plogp(logp)
    H = -plogp.sum(-1, keepdims=True)
    return coef[..., None] * (-(plogp + p * H))


def loss_and_grad(params: dict, batch: dict, cfg: dict, need_grad: bool = True):
    """Clipped-surrogate PPO loss on a batch and its parameter gradient.

    batch keys: x (B,N,F), a_norm (B,N,N), n_leo, leo_mask (B,K,N_L+1),
    meo_mask (B,K,N_M) (optional), leo_choice (B,K), meo_choice (B,K),
    sub_valid (B,K), is_move (B,K), old_logp (B,), adv (B,), ret (B,).
    cfg keys: clip_epsilon, policy_coef, value_coef, entropy_coef.
    Loss terms are means over the batch; `denom` overrides the divisor so
    chunked calls can be summed.
    """
    x, a_norm, n_leo = batch["x"], batch["a_norm"], batch["n_leo"]
    B = x.shape[0]
    denom = batch.get("denom", B)
    eps = cfg["clip_epsilon"]
    cache = []
    emb, pooled = encode_graph(params, x, a_norm, cache)
    h = emb.shape[-1]

    leo_z, (u_leo, g_leo) = leo_logits(params, emb, pooled, n_leo)
    K = batch["leo_choice"].shape[1]
    leo_mask = batch["leo_mask"]
    leo_z_k = np.broadcast_to(leo_z[:, None, :], leo_mask.shape)
    leo_logp = log_softmax(leo_z_k, leo_mask)  # (B,K,N_L+1)
    leo_choice = batch["leo_choice"]
    sub_valid = batch["sub_valid"].astype(float)
    is_move = batch["is_move"].astype(float)
    bidx = np.arange(B)[:, None]
    kidx = np.arange(K)[None, :]
    lp_leo = np.where(sub_valid > 0, leo_logp[bidx, kidx, leo_choice], 0.0)

    chosen_idx = np.where(is_move > 0, leo_choice, 0)
    chosen = emb[bidx, chosen_idx]  # (B,K,h)
    pooled_k = np.broadcast_to(pooled[:, None, :], chosen.shape)
    meo_z, (v_meo, g_meo) = meo_logits(params, pooled_k, chosen)
    meo_mask = batch.get("meo_mask")
    meo_logp = log_softmax(meo_z, meo_mask)
    lp_meo = np.where(is_move > 0, meo_logp[bidx, kidx, batch["meo_choice"]], 0.0)

    logp = (lp_leo + lp_meo).sum(1)
    ent_k = entropy(leo_logp) * sub_valid + entropy(meo_logp) * is_move
    ent = ent_k.sum(1)
    value, g_val = value_forward(params, pooled)

    adv, ret = batch["adv"], batch["ret"]
    ratio = np.exp(logp - batch["old_logp"])
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    use_unclipped = surr1 <= surr2
    policy_loss = -np.minimum(surr1, surr2).sum() / denom
    value_loss = ((ret - value) ** 2).sum() / denom
    ent_mean = ent.sum() / denom
    pc, vc, ec = cfg.get("policy_coef", 1.0), cfg["value_coef"], cfg["entropy_coef"]
    total = pc * policy_loss + vc * value_loss - ec * ent_mean
    stats = {
        "loss": total,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent_mean,
        "ratio": ratio,
        "logp": logp,
        "value": value,
    }
    if not need_grad:
        return stats, None

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    d_logp = np.where(use_unclipped, -adv * ratio, 0.0) * pc / denom  # (B,)
    d_ent = np.full(B, -ec / denom)
    d_value = -2.0 * (ret - value) * vc / denom

    # LEO head: d/dz of logp[choice] is onehot - p; entropy via _entropy_grad
    p_leo = np.exp(leo_logp)
    onehot = np.zeros_like(p_leo)
    np.put_along_axis(onehot, leo_choice[..., None], 1.0, axis=-1)
    dz_leo_k = (d_logp[:, None, None] * (onehot - p_leo)) * sub_valid[..., None]
    dz_leo_k += _entropy_grad(leo_logp, d_ent[:, None] * sub_valid)
    dz_leo_k = np.where(leo_mask, dz_leo_k, 0.0)
    dz_leo = dz_leo_k.sum(1)  # (B, N_L+1)

    d_emb = np.zeros_like(emb)
    d_pooled = np.zeros_like(pooled)

    ds = dz_leo[:, :n_leo]
    dstop = dz_leo[:, n_leo]
    grads["stop.w"] += pooled.T @ dstop
    grads["stop.b"][0] += dstop.sum()
    d_pooled += dstop[:, None] * params["stop.w"]
    grads["leo.w2"] += np.einsum("bnh,bn->h", g_leo, ds)
    grads["leo.b2"][0] += ds.sum()
    dz1 = ds[..., None] * params["leo.w2"] * (1.0 - g_leo**2)
    grads["leo.W1"] += np.einsum("bni,bnj->ij", u_leo, dz1)
    grads["leo.b1"] += dz1.sum((0, 1))
    du = dz1 @ params["leo.W1"].T
    d_emb[:, :n_leo] += du[..., :h]
    d_pooled += du[..., h:].sum(1)

    # MEO head
    p_meo = np.exp(meo_logp)
    onehot_m = np.zeros_like(p_meo)
    np.put_along_axis(onehot_m, batch["meo_choice"][..., None], 1.0, axis=-1)
    dz_meo = (d_logp[:, None, None] * (onehot_m - p_meo)) * is_move[..., None]
    dz_meo += _entropy_grad(meo_logp, d_ent[:, None] * is_move)
    if meo_mask is not None:
        dz_meo = np.where(meo_mask, dz_meo, 0.0)
    grads["meo.W2"] += np.einsum("bki,bkj->ij", g_meo, dz_meo)
    grads["meo.b2"] += dz_meo.sum((0, 1))
    dz2 = (dz_meo @ params["meo.W2"].T) * (1.0 - g_meo**2)
    grads["meo.W1"] += np.einsum("bki,bkj->ij", v_meo, dz2)
    grads["meo.b1"] += dz2.sum((0, 1))
    dv = dz2 @ params["meo.W1"].T
    d_pooled += dv[..., :h].sum(1)
    np.add.at(d_emb, (np.broadcast_to(bidx, chosen_idx.shape), chosen_idx), dv[..., h:])

    # value head
    grads["val.w2"] += g_val.T @ d_value
    grads["val.b2"][0] += d_value.sum()
    dz3 = d_value[:, None] * params["val.w2"] * (1.0 - g_val**2)
    grads["val.W1"] += pooled.T @ dz3
    grads["val.b1"] += dz3.sum(0)
    d_pooled += dz3 @ params["val.W1"].T

    # pooling and encoder layers
    n_nodes = emb.shape[1]
    d_h = d_emb + d_pooled[:, None, :] / n_nodes
    for l in reversed(range(len(cache))):
        h_in, agg, out = cache[l]
        dz = d_h * (1.0 - out**2)
        grads[f"enc{l}.W_self"] += np.einsum("bni,bnj->ij", h_in, dz)
        grads[f"enc{l}.W_nbr"] += np.einsum("bni,bnj->ij", agg, dz)
        grads[f"enc{l}.b"] += dz.sum((0, 1))
        if l:
            d_agg = dz @ params[f"enc{l}.W_nbr"].T
            d_h = dz @ params[f"enc{l}.W_self"].T + np.swapaxes(a_norm, -1, -2) @ d_agg
    return stats, grads


class Adam:
    """Bias-corrected adaptive-moment steps over a dict of arrays."""

    def __init__(self, params: dict, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        if self.lr == 0:
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm
