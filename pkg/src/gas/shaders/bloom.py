"""Multi-resolution bloom: soft-threshold glow mask, Gaussian blur per level,
and a saturating exponential tone curve."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..image import (
    LUMA_WEIGHTS,
    downsample_half,
    downsample_half_adjoint,
    luma,
    upsample_adjoint,
    upsample_to,
)
from ._common import Tape, conv_axis, conv_axis_bwd, sigmoid, softplus, softplus_inv

N_LEVELS = 4
BLUR_RADIUS = 6

# near-identity start: glow factor <= sigmoid(-10) on [0, 1] inputs and the tone
# curve within eps/8 of I/s
INIT_THRESHOLD = 1.5
INIT_STEEPNESS = 20.0
INIT_EXPOSURE = 0.005
INIT_SATURATION = 1.0


@dataclass
class BloomLevelParams:
    a: float = INIT_THRESHOLD
    b_raw: float = float(softplus_inv(INIT_STEEPNESS))
    logvar_x: float = 0.0
    logvar_y: float = 0.0

    @property
    def b(self) -> float:
        return float(softplus(self.b_raw))


@dataclass
class BloomToneParams:
    eps_raw: float = float(softplus_inv(INIT_EXPOSURE))
    s_raw: float = float(softplus_inv(INIT_SATURATION))

    @property
    def eps(self) -> float:
        return float(softplus(self.eps_raw))

    @property
    def s(self) -> float:
        return float(softplus(self.s_raw))


def default_levels() -> list[BloomLevelParams]:
    return [BloomLevelParams() for _ in range(N_LEVELS)]


def glow_mask(img: np.ndarray, level: BloomLevelParams):
    """``img * sigmoid(b (luma - a))`` with the factor shared by all channels."""
    lum = luma(img)
    b = level.b
    factor = sigmoid(b * (lum - level.a))
    return img * factor, Tape(img=img, lum=lum, factor=factor, a=level.a, b=b, b_raw=level.b_raw)


def glow_mask_bwd(grad_out: np.ndarray, tape: Tape):
    t = tape.consume()
    g_factor = np.sum(grad_out * t.img, axis=0, keepdims=True)
    g_z = g_factor * t.factor * (1.0 - t.factor)
    g_img = grad_out * t.factor + LUMA_WEIGHTS[:, None, None] * (g_z * t.b)
    g_a = -t.b * float(np.sum(g_z))
    g_b = float(np.sum(g_z * (t.lum - t.a)))
    return g_img, BloomLevelParams(a=g_a, b_raw=g_b * float(sigmoid(t.b_raw)), logvar_x=0.0, logvar_y=0.0)


def gaussian_kernel(logvar: float, radius: int = BLUR_RADIUS):
    """Sum-normalized Gaussian taps and their derivative with respect to ``logvar``."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    q = offsets**2 * (0.5 * np.exp(-logvar))
    e = np.exp(-q)
    w = e / e.sum()
    # d q_i / d logvar = -q_i, so d w_i = w_i (q_i - sum_j w_j q_j)
    dw = w * (q - np.dot(w, q))
    return w, dw


def tone_constant(eps: float, s: float) -> float:
    """``e^{eps s} / (e^{eps s} - 1)``."""
    return 1.0 / -np.expm1(-eps * s)


def tone_curve(x, eps: float, s: float):
    """Exponential tone curve before the clamp at 1."""
    return tone_constant(eps, s) * -np.expm1(-eps * np.asarray(x))


def _tone_bwd(g, x, eps, s):
    k = tone_constant(eps, s)
    ex = np.exp(-eps * x)
    es = np.exp(-eps * s)
    one_minus = -np.expm1(-eps * x)
    g_x = g * k * eps * ex
    dk_deps = -k * k * s * es
    dk_ds = -k * k * eps * es
    g_eps = float(np.sum(g * (dk_deps * one_minus + k * x * ex)))
    g_s = float(np.sum(g * dk_ds * one_minus))
    return g_x, g_eps, g_s


def bloom_fwd(img: np.ndarray, levels, tone: BloomToneParams, radius: int = BLUR_RADIUS):
    _, h, w = img.shape
    level_tapes = []
    bloom_map = np.zeros_like(img, dtype=np.float64)
    src = img
    for lvl, params in enumerate(levels):
        if lvl:
            src = downsample_half(src)
        glow, glow_tape = glow_mask(src, params)
        wx, dwx = gaussian_kernel(params.logvar_x, radius)
        wy, dwy = gaussian_kernel(params.logvar_y, radius)
        horiz = conv_axis(glow, wx, axis=-1)
        blurred = conv_axis(horiz, wy, axis=-2)
        bloom_map += upsample_to(blurred, w, h)
        level_tapes.append(
            dict(shape=src.shape, glow=glow, glow_tape=glow_tape, horiz=horiz, wx=wx, dwx=dwx, wy=wy, dwy=dwy)
        )
    bloomed = img + bloom_map
    eps, s = tone.eps, tone.s
    curve = tone_curve(bloomed, eps, s)
    unclamped = curve < 1.0
    out = np.where(unclamped, curve, 1.0)
    tape = Tape(
        levels=level_tapes,
        bloomed=bloomed,
        bloom_map=bloom_map,
        unclamped=unclamped,
        eps=eps,
        s=s,
        eps_raw=tone.eps_raw,
        s_raw=tone.s_raw,
    )
    return out, tape


def bloom_bwd(grad_out: np.ndarray, tape: Tape):
    t = tape.consume()
    g_curve = np.where(t.unclamped, grad_out, 0.0)
    g_bloomed, g_eps, g_s = _tone_bwd(g_curve, t.bloomed, t.eps, t.s)
    g_tone = BloomToneParams(
        eps_raw=g_eps * float(sigmoid(t.eps_raw)), s_raw=g_s * float(sigmoid(t.s_raw))
    )
    g_levels = []
    g_src = None
    # walk the pyramid coarse to fine so the downsample adjoints chain
    for lt in reversed(t.levels):
        _, lh, lw = lt["shape"]
        g_blurred = upsample_adjoint(g_bloomed, lw, lh)
        g_horiz, g_wy = conv_axis_bwd(g_blurred, lt["horiz"], lt["wy"], axis=-2)
        g_glow, g_wx = conv_axis_bwd(g_horiz, lt["glow"], lt["wx"], axis=-1)
        g_level_src, g_level = glow_mask_bwd(g_glow, lt["glow_tape"])
        g_level.logvar_x = float(np.dot(g_wx, lt["dwx"]))
        g_level.logvar_y = float(np.dot(g_wy, lt["dwy"]))
        g_levels.append(g_level)
        if g_src is not None:
            g_level_src = g_level_src + downsample_half_adjoint(g_src, lh, lw)
        g_src = g_level_src
    g_levels.reverse()
    g_img = g_bloomed + g_src
    return g_img, g_levels, g_tone
