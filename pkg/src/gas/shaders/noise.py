"""Sensor noise in linear light: shot noise approximated as Gaussian plus read noise.

``out_lin = lin + sqrt(gain * lin) n1 + sigma n2`` with the draws stored on the
tape, so the backward pass is the pathwise derivative for those draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..image import DEFAULT_GAMMA, to_linear
from ..rng import CounterRng
from ._common import Tape, sigmoid, softplus

INIT_RAW = -10.0  # softplus(-10) ~ 4.5e-5
MIN_DENOM = 1e-12


@dataclass
class NoiseParams:
    gamma_raw: float = INIT_RAW
    sigma_raw: float = INIT_RAW

    @property
    def gain(self) -> float:
        return float(softplus(self.gamma_raw))

    @property
    def sigma(self) -> float:
        return float(softplus(self.sigma_raw))


def draw_noise(rng: CounterRng, shape) -> tuple[np.ndarray, np.ndarray]:
    """Shot and read draws for one image: counters ``[0, N)`` then ``[N, 2N)``."""
    n = int(np.prod(shape))
    z = rng.normal(2 * n)
    return z[:n].reshape(shape), z[n:].reshape(shape)


def noise_fwd(img: np.ndarray, p: NoiseParams, rng: CounterRng, gamma: float = DEFAULT_GAMMA, draws=None):
    lin = to_linear(img, gamma)
    n1, n2 = draws if draws is not None else draw_noise(rng, img.shape)
    gain, sigma = p.gain, p.sigma
    root = np.sqrt(gain * np.maximum(lin, 0.0))
    out_lin = lin + root * n1 + sigma * n2
    positive = out_lin > 0.0
    out = np.where(positive, out_lin, 0.0) ** (1.0 / gamma)
    if gain == 0.0 and sigma == 0.0:
        # the gamma round trip is only exact to an ulp; the noiseless stage is the identity
        out = np.array(img, dtype=np.float64)
    tape = Tape(
        img=img, lin=lin, n1=n1, n2=n2, out_lin=out_lin, out=out, positive=positive,
        gain=gain, sigma=sigma, gamma=gamma, gamma_raw=p.gamma_raw, sigma_raw=p.sigma_raw,
    )
    return out, tape


def noise_bwd(grad_out: np.ndarray, tape: Tape):
    t = tape.consume()
    inv = 1.0 / t.gamma
    # d out / d out_lin, zero where the clamp at 0 is active
    safe = np.where(t.positive, t.out_lin, 1.0)
    g_lin_out = np.where(t.positive, grad_out * inv * safe ** (inv - 1.0), 0.0)

    lit = t.lin > 0.0
    if t.gain > 0.0:
        d_gain = np.where(lit, 0.5 * np.sqrt(np.maximum(t.lin, 0.0) / t.gain) * t.n1, 0.0)
    else:
        d_gain = np.zeros_like(t.lin)
    d_lin = 1.0 + t.n1 * np.sqrt(t.gain) / (2.0 * np.sqrt(np.maximum(t.lin, MIN_DENOM)))
    g_gain = float(np.sum(g_lin_out * d_gain))
    g_sigma = float(np.sum(g_lin_out * t.n2))

    g_lin = g_lin_out * d_lin
    g_img = g_lin * t.gamma * t.img ** (t.gamma - 1.0)
    grads = NoiseParams(
        gamma_raw=g_gain * float(sigmoid(t.gamma_raw)),
        sigma_raw=g_sigma * float(sigmoid(t.sigma_raw)),
    )
    return g_img, grads
