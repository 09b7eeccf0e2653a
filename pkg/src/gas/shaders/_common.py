"""Helpers shared by the shader stages: positivity maps, tapes, 1-D convolution."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import TapeReuse


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of :func:`softplus` for ``y > 0``."""
    y = np.asarray(y, dtype=np.float64)
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))[()]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return (0.5 * (1.0 + np.tanh(0.5 * x)))[()]


class Tape:
    """Forward-pass cache consumed by exactly one backward call."""

    def __init__(self, **cached):
        self.__dict__.update(cached)
        self._used = False

    def consume(self) -> "Tape":
        if self._used:
            raise TapeReuse(f"{type(self).__name__} already consumed by a backward pass")
        self._used = True
        return self


def _taps_sum(xp: np.ndarray, taps: np.ndarray, n: int) -> np.ndarray:
    """``sum_m taps[m] * xp[..., m : m + n]`` as one contraction."""
    lead = "abcdefgh"[: xp.ndim - 1]
    windows = sliding_window_view(xp, n, axis=-1)
    return np.einsum(f"{lead}mi,m->{lead}i", windows, taps)


def _edge_pad(xm: np.ndarray, r: int, mode: str = "edge") -> np.ndarray:
    return np.pad(xm, [(0, 0)] * (xm.ndim - 1) + [(r, r)], mode=mode)


def conv_axis(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Same-size convolution along ``axis`` with replicate-edge borders.

    ``out[i] = sum_j k[j] * x[clamp(i + r - j)]`` where ``r = len(k) // 2``.
    """
    r = len(k) // 2
    xm = np.moveaxis(x, axis, -1)
    out = _taps_sum(_edge_pad(xm, r), np.asarray(k)[::-1], xm.shape[-1])
    return np.moveaxis(out, -1, axis)


def conv_axis_bwd(g: np.ndarray, x: np.ndarray, k: np.ndarray, axis: int):
    """Adjoint of :func:`conv_axis`: gradients for the input and the taps."""
    r = len(k) // 2
    gm = np.moveaxis(g, axis, -1)
    xm = np.moveaxis(x, axis, -1)
    n = xm.shape[-1]
    lead = "abcdefgh"[: gm.ndim - 1]
    # windows[..., m, i] = xp[..., m + i]; tap j reads window 2r - j
    windows = sliding_window_view(_edge_pad(xm, r), n, axis=-1)
    gk = np.einsum(f"{lead}i,{lead}mi->m", gm, windows)[::-1].copy()
    # gradient w.r.t. the padded input, then fold the pads onto the edge samples
    gp = _taps_sum(_edge_pad(gm, 2 * r, mode="constant"), np.asarray(k), n + 2 * r)
    gx = gp[..., r : r + n].copy()
    if r:
        gx[..., 0] += gp[..., :r].sum(axis=-1)
        gx[..., -1] += gp[..., r + n :].sum(axis=-1)
    return np.moveaxis(gx, -1, axis), gk
