"""Bias-corrected Adam over lists of numpy arrays."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NanGradient


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p, dtype=np.float64) for p in params],
                   [np.zeros_like(p, dtype=np.float64) for p in params])


def adam_step(params, grads, state: AdamState, lr: float = 1e-4, betas=(0.9, 0.999),
              eps: float = 1e-8, mask=None):
    """Update ``params`` in place and return them.

    ``mask`` (same structure as ``params``, 0/1 entries) freezes entries:
    frozen scalars keep their value and their moments stay at zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must line up")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NanGradient("non-finite gradient")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != np.shape(g):
            raise ValueError(f"shape mismatch at slot {i}: {p.shape} vs {np.shape(g)}")
        if mask is not None:
            g = g * mask[i]
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p -= update.astype(p.dtype, copy=False)
    return params
