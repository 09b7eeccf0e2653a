"""Procedural render-like scenes and ground-truth target sets for experiments and tests."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .image import save_png
from .pipeline import PipelineParams, pipeline_fwd
from .rng import CounterRng

STREAM_SCENES = 0x5CE
TRUE_M = np.diag([0.9, 0.8, 0.7])
TRUE_T = np.array([0.05, 0.05, 0.05])


def _palette(u: np.ndarray) -> np.ndarray:
    # independent channels with a lot of mass near the dark end, so per-channel
    # histograms pin both the offset and any cross-channel leakage
    return 0.9 * u**2


def make_scene(seed: int, size: int = 256) -> np.ndarray:
    """A flat-shaded scene: gradient sky, coloured ellipses and boxes, fine texture.

    Values stay inside [0, 0.92] so affine colour targets do not clip.
    """
    rng = CounterRng(seed, STREAM_SCENES)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    top, bottom = _palette(rng.uniform(3)), _palette(rng.uniform(3))
    img = top[:, None, None] * (1 - yy) + bottom[:, None, None] * yy
    n_shapes = 6 + int(rng.integers(10, 1)[0])
    for _ in range(n_shapes):
        cx, cy, rx, ry = rng.uniform(4)
        colour = _palette(rng.uniform(3))
        if rng.uniform(1)[0] < 0.5:
            inside = ((xx - cx) / (0.05 + 0.25 * rx)) ** 2 + ((yy - cy) / (0.05 + 0.25 * ry)) ** 2 < 1.0
        else:
            inside = (np.abs(xx - cx) < 0.04 + 0.2 * rx) & (np.abs(yy - cy) < 0.04 + 0.2 * ry)
        shade = 0.85 + 0.15 * (1 - yy)
        img = np.where(inside, colour[:, None, None] * shade, img)
    texture = 0.01 * rng.normal(size * size).reshape(size, size)
    img = img + texture[None]
    return np.clip(img, 0.0, 0.92)


def true_color_params(base: PipelineParams | None = None) -> PipelineParams:
    p = (base or PipelineParams()).copy()
    p.color.m = TRUE_M.copy()
    p.color.t = TRUE_T.copy()
    return p


def make_target(img: np.ndarray, params: PipelineParams) -> np.ndarray:
    """Apply the ground-truth pipeline (noise off) to a source scene."""
    out, _ = pipeline_fwd(img, params, train_mode=False, noise=False)
    return out.data


def write_recovery_dataset(root, n_images: int = 200, size: int = 256, seed: int = 0):
    """Write ``source/`` and ``target/`` PNG folders for the colour-recovery run.

    Targets are built from scenes disjoint from the sources, so the pair of
    folders is genuinely unpaired.
    """
    root = Path(root)
    src_dir, tgt_dir = root / "source", root / "target"
    src_dir.mkdir(parents=True, exist_ok=True)
    tgt_dir.mkdir(parents=True, exist_ok=True)
    truth = true_color_params()
    for i in range(n_images):
        save_png(make_scene(seed * 100003 + 2 * i, size), src_dir / f"{i:04d}.png")
        scene = make_scene(seed * 100003 + 2 * i + 1, size)
        save_png(make_target(scene, truth), tgt_dir / f"{i:04d}.png")
    return src_dir, tgt_dir
