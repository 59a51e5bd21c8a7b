"""Pure-numpy implementations of the training hot-spot kernels.

Same call contracts as the compiled backend in ``_ck``: causal softmax and
Adam run in place on the arrays handed in, everything else allocates.
"""

from __future__ import annotations

import numpy as np

# plain Python floats: numpy scalar constants would upcast float32 arrays
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def causal_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax over (R, T, T) attention scores, in place.

    Query row t only sees keys 0..t; masked positions come out exactly 0.
    """
    r, t, t2 = scores.shape
    assert t == t2
    mask = np.triu(np.ones((t, t), dtype=bool), k=1)
    scores[:, mask] = -np.inf
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    return scores


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Gradient through row softmax; overwrites and returns ``dprobs``."""
    inner = np.sum(probs * dprobs, axis=-1, keepdims=True)
    dprobs -= inner
    dprobs *= probs
    return dprobs


def layernorm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    """Normalize rows of (N, E) ``x``; returns (y, mean, rstd)."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * rstd * gain + bias
    return y, mean.squeeze(-1), rstd.squeeze(-1)


def layernorm_backward(x: np.ndarray, gain: np.ndarray, mean: np.ndarray,
                       rstd: np.ndarray, dy: np.ndarray):
    """Returns (dx, dgain, dbias) for the forward above."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    dx = rstd[:, None] * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx.astype(x.dtype, copy=False), dgain, dbias


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x ** 3)))


def gelu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du)


def adam_update(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                lr: float, beta1: float, beta2: float, eps: float, step: int) -> None:
    """One bias-corrected Adam update, in place on ``param``, ``m``, ``v``."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad ** 2
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    mhat = m / bc1
    vhat = v / bc2
    param -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(param.dtype, copy=False)
