"""Lens blur -> color map -> bloom -> sensor noise, plus parameter files."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kvfile
from .errors import MissingField, SchemaVersionMismatch, UnknownField
from .image import DEFAULT_GAMMA, ColorSpace, ImageBuf
from .rng import STREAM_PIPELINE_NOISE, CounterRng
from .shaders import (
    N_LEVELS,
    BloomLevelParams,
    BloomToneParams,
    ColorMapParams,
    LensBlurParams,
    NoiseParams,
    Tape,
    bloom_bwd,
    bloom_fwd,
    color_map_bwd,
    color_map_fwd,
    default_levels,
    lens_blur_bwd,
    lens_blur_fwd,
    noise_bwd,
    noise_fwd,
)

FORMAT_VERSION = 1
N_PARAMS = 42
STAGES = ("lens", "color", "bloom", "noise")
_LEVEL_FIELDS = ("a", "b_raw", "logvar_x", "logvar_y")


@dataclass
class PipelineParams:
    lens: LensBlurParams = field(default_factory=LensBlurParams)
    color: ColorMapParams = field(default_factory=ColorMapParams)
    bloom_levels: list = field(default_factory=default_levels)
    bloom_tone: BloomToneParams = field(default_factory=BloomToneParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    gamma: float = DEFAULT_GAMMA

    def copy(self) -> "PipelineParams":
        return copy.deepcopy(self)


@dataclass
class PipelineGrads:
    params: PipelineParams
    image: np.ndarray | None = None

    def vector(self) -> np.ndarray:
        return to_vector(self.params)


def param_names() -> list[str]:
    names = [f"lens.kx[{i}]" for i in range(5)]
    names += [f"lens.ky[{i}]" for i in range(5)]
    names += [f"color.m[{i}]" for i in range(9)]
    names += [f"color.t[{i}]" for i in range(3)]
    for lvl in range(N_LEVELS):
        names += [f"bloom.level{lvl}.{f}" for f in _LEVEL_FIELDS]
    names += ["bloom.tone.eps_raw", "bloom.tone.s_raw", "noise.gamma_raw", "noise.sigma_raw"]
    return names


def stage_of(name: str) -> str:
    return name.split(".", 1)[0]


def to_vector(p: PipelineParams) -> np.ndarray:
    parts = [p.lens.kx_raw, p.lens.ky_raw, p.color.m.ravel(), p.color.t]
    for lvl in p.bloom_levels:
        parts.append([getattr(lvl, f) for f in _LEVEL_FIELDS])
    parts.append([p.bloom_tone.eps_raw, p.bloom_tone.s_raw, p.noise.gamma_raw, p.noise.sigma_raw])
    return np.concatenate([np.asarray(x, dtype=np.float64).ravel() for x in parts])


def from_vector(vec, gamma: float = DEFAULT_GAMMA) -> PipelineParams:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} values, got {v.shape}")
    levels = [BloomLevelParams(*map(float, v[22 + 4 * i : 26 + 4 * i])) for i in range(N_LEVELS)]
    return PipelineParams(
        lens=LensBlurParams(v[0:5], v[5:10]),
        color=ColorMapParams(v[10:19], v[19:22]),
        bloom_levels=levels,
        bloom_tone=BloomToneParams(float(v[38]), float(v[39])),
        noise=NoiseParams(float(v[40]), float(v[41])),
        gamma=gamma,
    )


def pipeline_fwd(img, p: PipelineParams, rng: CounterRng | None = None, train_mode: bool = True,
                 noise: bool = True, draws=None):
    """Run the four stages in capture order.

    Returns ``(ImageBuf, tape)``; ``tape`` is ``None`` when ``train_mode`` is
    off.  ``draws`` pins the two noise fields instead of drawing from ``rng``.
    """
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError("pipeline input must be a 3-channel image")
    if rng is None:
        rng = CounterRng(0, STREAM_PIPELINE_NOISE)

    blurred, t_lens = lens_blur_fwd(x, p.lens)
    mapped, t_color = color_map_fwd(blurred, p.color)
    bloomed, t_bloom = bloom_fwd(mapped, p.bloom_levels, p.bloom_tone)
    if noise:
        lit = bloomed > 0.0
        noisy, t_noise = noise_fwd(np.where(lit, bloomed, 0.0), p.noise, rng, p.gamma, draws=draws)
    else:
        lit, noisy, t_noise = None, bloomed, None
    inside = (noisy >= 0.0) & (noisy <= 1.0)
    out = np.clip(noisy, 0.0, 1.0)
    if not train_mode:
        return ImageBuf(out, ColorSpace.GAMMA), None
    tape = Tape(stages=(t_lens, t_color, t_bloom, t_noise), lit=lit, inside=inside, gamma=p.gamma)
    return ImageBuf(out, ColorSpace.GAMMA), tape


def pipeline_bwd(grad_out, tape: Tape) -> PipelineGrads:
    t = tape.consume()
    t_lens, t_color, t_bloom, t_noise = t.stages
    g = np.where(t.inside, np.asarray(grad_out, dtype=np.float64), 0.0)
    if t_noise is not None:
        g, g_noise = noise_bwd(g, t_noise)
        g = np.where(t.lit, g, 0.0)
    else:
        g_noise = NoiseParams(0.0, 0.0)
    g, g_levels, g_tone = bloom_bwd(g, t_bloom)
    g, g_color = color_map_bwd(g, t_color)
    g, g_lens = lens_blur_bwd(g, t_lens)
    params = PipelineParams(g_lens, g_color, g_levels, g_tone, g_noise, t.gamma)
    return PipelineGrads(params, g)


# --- parameter files --------------------------------------------------------


def params_items(p: PipelineParams):
    yield "format_version", FORMAT_VERSION
    yield "gamma", float(p.gamma)
    for name, value in zip(param_names(), to_vector(p)):
        yield name, float(value)


def save_params(p: PipelineParams, path) -> None:
    kvfile.write(path, params_items(p))


def params_from_mapping(doc: dict[str, str]) -> PipelineParams:
    if "format_version" not in doc:
        raise MissingField("format_version")
    version = int(doc["format_version"])
    if version != FORMAT_VERSION:
        raise SchemaVersionMismatch(f"format_version {version}, expected {FORMAT_VERSION}")
    missing = [k for k in ["gamma", *param_names()] if k not in doc]
    if missing:
        raise MissingField(", ".join(missing))
    extra = sorted(set(doc) - {"format_version", "gamma", *param_names()})
    if extra:
        raise UnknownField(", ".join(extra))
    vec = [float(doc[k]) for k in param_names()]
    return from_vector(vec, gamma=float(doc["gamma"]))


def load_params(path) -> PipelineParams:
    return params_from_mapping(kvfile.read(Path(path)))
