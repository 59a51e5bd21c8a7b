"""Causal transformer: parameter init, forward, loss, manual backward.

Parameters live in a flat name -> ndarray dict so the optimizer and the
checkpoint container can treat them uniformly.  The backward pass is written
by hand against the forward's cache; the finite-difference suite in the
tests pins its correctness.  All tensors share one dtype (float32 for
training, float64 as the high-precision test mode).
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as K
from .config import ModelConfig, ModelError

LN_EPS = 1e-5
INIT_STD = 0.02


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Name -> shape map; the output head is tied to ``tok_emb``."""
    E, V = config.n_embd, config.vocab_size
    shapes = {
        "tok_emb": (V, E),
        "pos_emb": (config.block_size, E),
    }
    for i in range(config.n_layer):
        p = f"h{i}."
        shapes[p + "ln1.g"] = (E,)
        shapes[p + "ln1.b"] = (E,)
        shapes[p + "attn.w_qkv"] = (E, 3 * E)
        shapes[p + "attn.b_qkv"] = (3 * E,)
        shapes[p + "attn.w_out"] = (E, E)
        shapes[p + "attn.b_out"] = (E,)
        shapes[p + "ln2.g"] = (E,)
        shapes[p + "ln2.b"] = (E,)
        shapes[p + "mlp.w_fc"] = (E, 4 * E)
        shapes[p + "mlp.b_fc"] = (4 * E,)
        shapes[p + "mlp.w_proj"] = (4 * E, E)
        shapes[p + "mlp.b_proj"] = (E,)
    shapes["lnf.g"] = (E,)
    shapes["lnf.b"] = (E,)
    return shapes


def init_params(config: ModelConfig, seed, dtype=np.float32) -> dict[str, np.ndarray]:
    """Gaussian(0, 0.02) weights, zero biases, unit norms.

    Residual-output projections (``attn.w_out``, ``mlp.w_proj``) are scaled
    down by 1/sqrt(2 * n_layer).  Draws happen in float64 in a fixed order,
    so a seed gives the same init in either precision mode.
    """
    rng = np.random.default_rng(seed)
    resid_std = INIT_STD / np.sqrt(2.0 * config.n_layer)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith((".b", ".b_qkv", ".b_out", ".b_fc", ".b_proj")):
            arr = np.zeros(shape)
        elif name.endswith(".g"):
            arr = np.ones(shape)
        elif name.endswith(("w_out", "w_proj")):
            arr = rng.normal(0.0, resid_std, size=shape)
        else:
            arr = rng.normal(0.0, INIT_STD, size=shape)
        params[name] = arr.astype(dtype)
    return params


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def _dropout_mask(rng, shape, keep: float):
    return rng.random(shape) < keep


def _split_heads(m: np.ndarray, B: int, T: int, H: int, D: int) -> np.ndarray:
    """(B*T, H*D) -> contiguous (B, H, T, D)."""
    return np.ascontiguousarray(m.reshape(B, T, H, D).transpose(0, 2, 1, 3))


def _merge_heads(m: np.ndarray, B: int, T: int, E: int) -> np.ndarray:
    """(B, H, T, D) -> (B*T, E)."""
    return np.ascontiguousarray(m.transpose(0, 2, 1, 3)).reshape(B * T, E)


def forward(config: ModelConfig, params: dict, tokens, *, train: bool = False,
            rng=None, return_cache: bool = False):
    """Logits for every position: row t parameterizes p(token[t+1] | tokens[:t+1]).

    ``tokens`` is a (T,) sequence or a (B, T) batch of ids; the result is
    (T, V) or (B, T, V) accordingly.  Dropout fires only when ``train`` is
    set (an ``rng`` is then required); position t never sees tokens past t.
    """
    ids = np.asarray(tokens)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.size == 0:
        raise ModelError(f"tokens must be 1-D or 2-D and non-empty, got shape {ids.shape}")
    B, T = ids.shape
    if T > config.block_size:
        raise ModelError(f"sequence length {T} exceeds block size {config.block_size}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ModelError("token id outside vocabulary")

    E, H, D = config.n_embd, config.n_head, config.head_dim
    scale = 1.0 / float(np.sqrt(D))
    p_drop = config.dropout if train else 0.0
    keep = 1.0 - p_drop
    if p_drop > 0.0 and rng is None:
        raise ModelError("training-mode forward needs an rng for dropout")

    cache = {"ids": ids, "B": B, "T": T, "layers": []} if return_cache else None

    x = params["tok_emb"][ids.ravel()].reshape(B, T, E) + params["pos_emb"][:T][None]
    if p_drop > 0.0:
        emb_mask = _dropout_mask(rng, x.shape, keep)
        x *= emb_mask
        x /= keep
        if return_cache:
            cache["emb_mask"] = emb_mask
    x = x.reshape(B * T, E)

    for i in range(config.n_layer):
        p = f"h{i}."
        x_in = x
        y1, mean1, rstd1 = K.layernorm_forward(x_in, params[p + "ln1.g"],
                                               params[p + "ln1.b"], LN_EPS)
        qkv = y1 @ params[p + "attn.w_qkv"] + params[p + "attn.b_qkv"]
        q = _split_heads(qkv[:, :E], B, T, H, D)
        k = _split_heads(qkv[:, E:2 * E], B, T, H, D)
        v = _split_heads(qkv[:, 2 * E:], B, T, H, D)

        scores = q @ k.transpose(0, 1, 3, 2)
        scores *= scale
        probs = K.causal_softmax(scores.reshape(B * H, T, T)).reshape(B, H, T, T)
        if p_drop > 0.0:
            attn_mask = _dropout_mask(rng, probs.shape, keep)
            probs_used = probs * attn_mask
            probs_used /= keep
        else:
            attn_mask = None
            probs_used = probs
        att = _merge_heads(probs_used @ v, B, T, E)
        proj = att @ params[p + "attn.w_out"] + params[p + "attn.b_out"]
        if p_drop > 0.0:
            res1_mask = _dropout_mask(rng, proj.shape, keep)
            proj *= res1_mask
            proj /= keep
        else:
            res1_mask = None
        x_mid = x_in + proj

        y2, mean2, rstd2 = K.layernorm_forward(x_mid, params[p + "ln2.g"],
                                               params[p + "ln2.b"], LN_EPS)
        h_pre = y2 @ params[p + "mlp.w_fc"] + params[p + "mlp.b_fc"]
        h_act = K.gelu(h_pre.ravel()).reshape(h_pre.shape)
        out = h_act @ params[p + "mlp.w_proj"] + params[p + "mlp.b_proj"]
        if p_drop > 0.0:
            res2_mask = _dropout_mask(rng, out.shape, keep)
            out *= res2_mask
            out /= keep
        else:
            res2_mask = None
        x = x_mid + out

        if return_cache:
            cache["layers"].append({
                "x_in": x_in, "mean1": mean1, "rstd1": rstd1, "y1": y1,
                "q": q, "k": k, "v": v, "probs": probs, "attn_mask": attn_mask,
                "att": att, "res1_mask": res1_mask, "x_mid": x_mid,
                "mean2": mean2, "rstd2": rstd2, "y2": y2, "h_pre": h_pre,
                "res2_mask": res2_mask,
            })

    yf, meanf, rstdf = K.layernorm_forward(x, params["lnf.g"], params["lnf.b"], LN_EPS)
    logits = (yf @ params["tok_emb"].T).reshape(B, T, config.vocab_size)
    if return_cache:
        cache.update(x_last=x, meanf=meanf, rstdf=rstdf, yf=yf, keep=keep)
        return (logits[0] if single else logits), cache
    return logits[0] if single else logits


def cross_entropy(logits, targets) -> float:
    """Mean negative log-likelihood, computed in float64 via stable log-softmax."""
    loss, _ = _cross_entropy_inner(logits, targets, want_grad=False)
    return loss


def cross_entropy_grad(logits, targets):
    """(loss, dloss/dlogits); the gradient comes back in the logits dtype."""
    return _cross_entropy_inner(logits, targets, want_grad=True)


def _cross_entropy_inner(logits, targets, want_grad: bool):
    arr = np.asarray(logits, dtype=np.float64)
    flat = arr.reshape(-1, arr.shape[-1])
    tgt = np.asarray(targets).reshape(-1)
    if tgt.shape[0] != flat.shape[0]:
        raise ModelError(
            f"targets shape {np.asarray(targets).shape} does not match logits"
        )
    n = flat.shape[0]
    mx = flat.max(axis=1, keepdims=True)
    shifted = flat - mx
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + mx
    loss = float(np.mean(lse.ravel() - flat[np.arange(n), tgt]))
    if not want_grad:
        return loss, None
    grad = np.exp(flat - lse)
    grad[np.arange(n), tgt] -= 1.0
    grad /= n
    grad = grad.reshape(np.asarray(logits).shape).astype(np.asarray(logits).dtype)
    return loss, grad


def backward(config: ModelConfig, params: dict, cache: dict, dlogits) -> dict:
    """Exact parameter gradients for ``forward(..., return_cache=True)``."""
    B, T = cache["B"], cache["T"]
    E, H, D = config.n_embd, config.n_head, config.head_dim
    scale = 1.0 / float(np.sqrt(D))
    keep = cache["keep"]
    ids = cache["ids"]

    grads = {name: np.zeros_like(p) for name, p in params.items()}

    d2 = np.asarray(dlogits).reshape(B * T, config.vocab_size)
    grads["tok_emb"] += d2.T @ cache["yf"]
    dyf = d2 @ params["tok_emb"]
    dx, dg, db = K.layernorm_backward(cache["x_last"], params["lnf.g"],
                                      cache["meanf"], cache["rstdf"], dyf)
    grads["lnf.g"] += dg
    grads["lnf.b"] += db

    for i in reversed(range(config.n_layer)):
        p = f"h{i}."
        c = cache["layers"][i]

        # MLP branch: x_out = x_mid + drop(out)
        dout = dx if c["res2_mask"] is None else dx * c["res2_mask"] / keep
        h_act = K.gelu(c["h_pre"].ravel()).reshape(c["h_pre"].shape)
        grads[p + "mlp.w_proj"] += h_act.T @ dout
        grads[p + "mlp.b_proj"] += dout.sum(axis=0)
        dh_act = dout @ params[p + "mlp.w_proj"].T
        dh_pre = K.gelu_backward(c["h_pre"].ravel(), dh_act.ravel()).reshape(dh_act.shape)
        grads[p + "mlp.w_fc"] += c["y2"].T @ dh_pre
        grads[p + "mlp.b_fc"] += dh_pre.sum(axis=0)
        dy2 = dh_pre @ params[p + "mlp.w_fc"].T
        dmid_ln, dg2, db2 = K.layernorm_backward(c["x_mid"], params[p + "ln2.g"],
                                                 c["mean2"], c["rstd2"], dy2)
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        dx = dx + dmid_ln  # now the gradient w.r.t. x_mid

        # attention branch: x_mid = x_in + drop(proj)
        dproj = dx if c["res1_mask"] is None else dx * c["res1_mask"] / keep
        grads[p + "attn.w_out"] += c["att"].T @ dproj
        grads[p + "attn.b_out"] += dproj.sum(axis=0)
        datt = _split_heads(dproj @ params[p + "attn.w_out"].T, B, T, H, D)
        probs = c["probs"]
        if c["attn_mask"] is None:
            probs_used = probs
        else:
            probs_used = probs * c["attn_mask"]
            probs_used /= keep
        dv = probs_used.transpose(0, 1, 3, 2) @ datt
        dprobs = datt @ c["v"].transpose(0, 1, 3, 2)
        if c["attn_mask"] is not None:
            dprobs *= c["attn_mask"]
            dprobs /= keep
        dscores = K.softmax_backward(probs.reshape(B * H, T, T),
                                     dprobs.reshape(B * H, T, T)).reshape(B, H, T, T)
        dscores *= scale
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]
        dqkv = np.concatenate(
            [_merge_heads(dq, B, T, E), _merge_heads(dk, B, T, E),
             _merge_heads(dv, B, T, E)], axis=1)
        grads[p + "attn.w_qkv"] += c["y1"].T @ dqkv
        grads[p + "attn.b_qkv"] += dqkv.sum(axis=0)
        dy1 = dqkv @ params[p + "attn.w_qkv"].T
        din_ln, dg1, db1 = K.layernorm_backward(c["x_in"], params[p + "ln1.g"],
                                                c["mean1"], c["rstd1"], dy1)
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dx = dx + din_ln  # gradient w.r.t. x_in

    demb = dx.reshape(B, T, E)
    if "emb_mask" in cache:
        demb = demb * cache["emb_mask"] / keep
    grads["pos_emb"][:T] += demb.sum(axis=0)
    onehot = np.zeros((B * T, config.vocab_size), dtype=demb.dtype)
    onehot[np.arange(B * T), ids.ravel()] = 1.0
    grads["tok_emb"] += onehot.T @ demb.reshape(B * T, E)
    return grads


def loss_and_gradients(config: ModelConfig, params: dict, inputs, targets, *, rng=None):
    """Teacher-forcing step: forward with dropout, loss, full backward."""
    logits, cache = forward(config, params, inputs, train=config.dropout > 0.0,
                            rng=rng, return_cache=True)
    loss, dlogits = cross_entropy_grad(logits, targets)
    grads = backward(config, params, cache, dlogits)
    return loss, grads
