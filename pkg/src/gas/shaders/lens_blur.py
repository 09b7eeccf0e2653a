"""Learnable separable lens blur with sum-normalized 5-tap kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateKernel
from ._common import Tape, conv_axis, conv_axis_bwd

TAPS = 5
MIN_KERNEL_SUM = 1e-6


def _impulse():
    k = np.zeros(TAPS)
    k[TAPS // 2] = 1.0
    return k


@dataclass
class LensBlurParams:
    kx_raw: np.ndarray = field(default_factory=_impulse)
    ky_raw: np.ndarray = field(default_factory=_impulse)

    def __post_init__(self):
        self.kx_raw = np.asarray(self.kx_raw, dtype=np.float64).reshape(TAPS)
        self.ky_raw = np.asarray(self.ky_raw, dtype=np.float64).reshape(TAPS)


def normalize_kernel(raw: np.ndarray) -> np.ndarray:
    total = float(np.sum(raw))
    if abs(total) <= MIN_KERNEL_SUM:
        raise DegenerateKernel(f"kernel sums to {total:g}")
    return raw / total


def _normalize_bwd(g_norm: np.ndarray, raw: np.ndarray) -> np.ndarray:
    # d(w_i / S)/d w_j = (delta_ij S - w_i) / S^2
    total = np.sum(raw)
    return (g_norm - np.dot(g_norm, raw / total)) / total


def lens_blur_fwd(img: np.ndarray, p: LensBlurParams):
    kx = normalize_kernel(p.kx_raw)
    ky = normalize_kernel(p.ky_raw)
    horiz = conv_axis(img, kx, axis=-1)
    out = conv_axis(horiz, ky, axis=-2)
    return out, Tape(img=img, horiz=horiz, kx=kx, ky=ky, kx_raw=p.kx_raw, ky_raw=p.ky_raw)


def lens_blur_bwd(grad_out: np.ndarray, tape: Tape):
    t = tape.consume()
    g_horiz, g_ky = conv_axis_bwd(grad_out, t.horiz, t.ky, axis=-2)
    g_img, g_kx = conv_axis_bwd(g_horiz, t.img, t.kx, axis=-1)
    grads = LensBlurParams(_normalize_bwd(g_kx, t.kx_raw), _normalize_bwd(g_ky, t.ky_raw))
    return g_img, grads
