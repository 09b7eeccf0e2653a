"""Per-pixel affine color transform ``rgb' = M rgb + t``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._common import Tape


@dataclass
class ColorMapParams:
    m: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)


def color_map_fwd(img: np.ndarray, p: ColorMapParams):
    out = np.einsum("cd,dhw->chw", p.m, img) + p.t[:, None, None]
    return out, Tape(img=img, m=p.m)


def color_map_bwd(grad_out: np.ndarray, tape: Tape):
    t = tape.consume()
    g_img = np.einsum("cd,chw->dhw", t.m, grad_out)
    g_m = np.einsum("chw,dhw->cd", grad_out, t.img)
    g_t = grad_out.sum(axis=(1, 2))
    return g_img, ColorMapParams(g_m, g_t)
