"""Adam with global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from .config import NumericsError


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters.

    Defaults: lr 1e-3, beta1 0.9, beta2 0.99, eps 1e-8, global-norm clip 1.0.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    clip_norm: float = 1.0


def init_adam(params: dict, **hyper) -> AdamState:
    m = {k: np.zeros_like(p) for k, p in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    return AdamState(m=m, v=v, **hyper)


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        flat = g.ravel()
        total += float(np.dot(flat, flat))
    return float(np.sqrt(total))


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One clipped, bias-corrected update; mutates ``params`` and ``state``.

    Aborts (raising NumericsError, state untouched) when any gradient is
    non-finite.  ``grads`` may be rescaled in place by the clip.
    """
    if set(grads) != set(params):
        missing = set(params) ^ set(grads)
        raise NumericsError(f"gradient/parameter name mismatch: {sorted(missing)}")
    norm = global_grad_norm(grads)
    if not np.isfinite(norm):
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        raise NumericsError(f"non-finite gradient in {bad}")
    if state.clip_norm > 0.0 and norm > state.clip_norm:
        scale = state.clip_norm / norm
        for g in grads.values():
            g *= scale
    state.step += 1
    for name, p in params.items():
        K.adam_update(p.ravel(), grads[name].ravel(), state.m[name].ravel(),
                      state.v[name].ravel(), state.lr, state.beta1, state.beta2,
                      state.eps, state.step)
    return params, state
