"""Deployment runtime: compile trained parameters into constants and run fused
float32 kernels over full frames."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _deploykernels as k
from .image import DEFAULT_GAMMA, ColorSpace, ImageBuf
from .pipeline import PipelineParams, pipeline_fwd
from .rng import CounterRng, stream_key
from .shaders import N_LEVELS, gaussian_kernel, normalize_kernel, tone_constant

LUT_SIZE = 1024


@dataclass
class CompiledPipeline:
    kx: np.ndarray
    ky: np.ndarray
    m: np.ndarray
    t: np.ndarray
    thresholds: np.ndarray
    steepness: np.ndarray
    blur_x: list
    blur_y: list
    eps: float
    tone_k: float
    gain: float
    sigma: float
    gamma: float
    use_lut: bool = False
    lut: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=np.float64))
    _scratch: dict = field(default_factory=dict, repr=False, compare=False)

    def constants(self) -> dict:
        """Everything derived from the parameters, for comparisons."""
        return {
            "kx": self.kx, "ky": self.ky, "m": self.m, "t": self.t,
            "thresholds": self.thresholds, "steepness": self.steepness,
            "blur_x": np.stack(self.blur_x), "blur_y": np.stack(self.blur_y),
            "eps": self.eps, "tone_k": self.tone_k, "gain": self.gain,
            "sigma": self.sigma, "gamma": self.gamma, "lut": self.lut,
        }


def compile_pipeline(p: PipelineParams, use_lut: bool = False) -> CompiledPipeline:
    """Hoist every per-frame invariant out of the frame loop.

    ``use_lut`` swaps the inverse-gamma power for a 1024-interval table with
    linear interpolation (max error ~3e-7 for gamma 2.2).
    """
    levels = p.bloom_levels
    eps, s = p.bloom_tone.eps, p.bloom_tone.s
    f32 = np.float32
    lut = np.linspace(0.0, 1.0, LUT_SIZE + 1) ** p.gamma if use_lut else np.zeros(2)
    return CompiledPipeline(
        kx=normalize_kernel(p.lens.kx_raw).astype(f32),
        ky=normalize_kernel(p.lens.ky_raw).astype(f32),
        m=p.color.m.astype(f32),
        t=p.color.t.astype(f32),
        thresholds=np.array([lv.a for lv in levels]),
        steepness=np.array([lv.b for lv in levels]),
        blur_x=[gaussian_kernel(lv.logvar_x)[0].astype(f32) for lv in levels],
        blur_y=[gaussian_kernel(lv.logvar_y)[0].astype(f32) for lv in levels],
        eps=float(eps),
        tone_k=float(tone_constant(eps, s)),
        gain=p.noise.gain,
        sigma=p.noise.sigma,
        gamma=float(p.gamma),
        use_lut=use_lut,
        lut=lut,
    )


compile = compile_pipeline  # noqa: A001  (name used by the CLI and docs)


def _taps(n_in: int, n_out: int):
    dst = np.arange(n_out, dtype=np.float64)
    src = np.clip((dst + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    return i0, np.minimum(i0 + 1, n_in - 1), src - i0


def _workers() -> int:
    # one row buffer per worker; the block split is fixed by this count
    return max(1, numba.get_num_threads())


def _scratch(cp: CompiledPipeline, h: int, w: int) -> dict:
    key = (h, w, _workers())
    buf = cp._scratch.get(key)
    if buf is not None:
        return buf
    f32 = np.float32
    sizes = [(h, w)]
    for _ in range(1, N_LEVELS):
        ph, pw = sizes[-1]
        sizes.append(((ph + 1) // 2, (pw + 1) // 2))
    y_taps = np.zeros((3, N_LEVELS, h))
    x_taps = np.zeros((3, N_LEVELS, w))
    for lvl, (lh, lw) in enumerate(sizes):
        y_taps[:, lvl] = _taps(lh, h)
        x_taps[:, lvl] = _taps(lw, w)
    buf = {
        "sizes": sizes,
        "input": np.empty((3, h, w), f32),
        "tmp": np.empty((3, h, w), f32),
        "base": np.empty((3, h, w), f32),
        "down": [None] + [np.empty((3, lh, lw), f32) for lh, lw in sizes[1:]],
        "glow": [np.empty((3, lh, lw), f32) for lh, lw in sizes],
        "blurred": [np.empty((3, lh, lw), f32) for lh, lw in sizes],
        "rows": np.empty((_workers(), 4, w), np.float64),
        "y0": y_taps[0].astype(np.int64), "y1": y_taps[1].astype(np.int64), "fy": y_taps[2],
        "x0": x_taps[0].astype(np.int64), "x1": x_taps[1].astype(np.int64), "fx": x_taps[2],
    }
    cp._scratch[key] = buf
    return buf


def run_frame(cp: CompiledPipeline, img, frame_index: int = 0, seed: int = 0, noise: bool = True,
              out: np.ndarray | None = None) -> ImageBuf:
    """Apply the compiled pipeline to one frame.

    Noise draws are keyed by ``(seed, frame_index)`` and the absolute sample
    index, matching :func:`pipeline_fwd` with ``CounterRng(seed, frame_index)``.
    Pass ``out`` (float32, ``(3, H, W)``) to avoid allocating the result.
    """
    src = np.asarray(img)
    if src.ndim != 3 or src.shape[0] != 3:
        raise ValueError("run_frame needs a 3-channel image")
    _, h, w = src.shape
    s = _scratch(cp, h, w)
    np.copyto(s["input"], src, casting="same_kind")
    if out is None:
        out = np.empty((3, h, w), np.float32)

    k.blur_rows(s["input"], cp.kx, s["tmp"])
    k.blur_cols_affine(s["tmp"], cp.ky, cp.m, cp.t, s["base"])

    level_src = s["base"]
    for lvl in range(N_LEVELS):
        if lvl:
            k.downsample_half(level_src, s["down"][lvl])
            level_src = s["down"][lvl]
        glow, blurred = s["glow"][lvl], s["blurred"][lvl]
        k.glow_mask(level_src, cp.thresholds[lvl], cp.steepness[lvl], glow)
        tmp = s["tmp"][:, : glow.shape[1], : glow.shape[2]]
        k.blur_rows(glow, cp.blur_x[lvl], tmp)
        k.blur_cols(tmp, cp.blur_y[lvl], blurred)

    key = np.uint64(stream_key(seed, frame_index))
    b = s["blurred"]
    k.finish(
        s["base"], b[0], b[1], b[2], b[3],
        s["y0"], s["y1"], s["fy"], s["x0"], s["x1"], s["fx"],
        cp.tone_k, cp.eps, bool(noise), cp.gain, cp.sigma, cp.gamma,
        cp.use_lut, cp.lut, key, s["rows"], out,
    )
    return ImageBuf(out, ColorSpace.GAMMA)


def reference_frame(p: PipelineParams, img, frame_index: int = 0, seed: int = 0, noise: bool = True) -> ImageBuf:
    """The training-path forward with the same noise keying as :func:`run_frame`."""
    out, _ = pipeline_fwd(img, p, CounterRng(seed, frame_index), train_mode=False, noise=noise)
    return out


# --- benchmarking -------------------------------------------------------------


@dataclass
class FrameStats:
    width: int
    height: int
    samples_ms: list
    ref_samples_ms: list
    bytes_moved: int

    @property
    def frames(self) -> int:
        return len(self.samples_ms)

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.samples_ms))

    @property
    def std_ms(self) -> float:
        return float(np.std(self.samples_ms))

    @property
    def ref_mean_ms(self) -> float:
        return float(np.mean(self.ref_samples_ms)) if self.ref_samples_ms else float("nan")

    @property
    def speedup(self) -> float:
        return self.ref_mean_ms / self.mean_ms


def bytes_per_frame(width: int, height: int) -> int:
    """Rough float32 traffic of the fused plan (reads + writes of whole planes)."""
    plane = 3 * width * height * 4
    full_res = 2 + 2 + 2 + 2 + 2 + 2  # input->tmp, tmp->base, glow, blur x, blur y, finish
    pyramid = sum(6 * 4.0**-lvl for lvl in range(1, N_LEVELS))
    return int(plane * (full_res + pyramid))


def synthetic_frame(width: int, height: int, seed: int = 0) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    base = np.stack([xx / max(width - 1, 1), yy / max(height - 1, 1), 0.5 * np.ones_like(xx, float)])
    grain = CounterRng(seed, 0xBE).uniform(3 * width * height).reshape(3, height, width)
    return np.clip(0.8 * base + 0.2 * grain, 0.0, 1.0)


def bench(cp: CompiledPipeline, width: int, height: int, frames: int = 10, params: PipelineParams | None = None,
          ref_frames: int | None = None, warmup: int = 3, seed: int = 0) -> FrameStats:
    """Time ``frames`` fused frames after ``warmup`` untimed ones.

    When ``params`` is given the reference (training-path) forward is timed
    on the same frame for ``ref_frames`` frames (default: ``frames``).
    """
    if frames < 10:
        raise ValueError("bench needs at least 10 frames")
    if width < 1 or height < 1:
        raise ValueError("width and height must be positive")
    img = synthetic_frame(width, height, seed)
    out = np.empty((3, height, width), np.float32)
    for i in range(warmup):
        run_frame(cp, img, i, seed, out=out)
    samples = []
    for i in range(frames):
        t0 = time.perf_counter()
        run_frame(cp, img, warmup + i, seed, out=out)
        samples.append((time.perf_counter() - t0) * 1e3)
    ref = []
    if params is not None:
        for i in range(frames if ref_frames is None else ref_frames):
            t0 = time.perf_counter()
            reference_frame(params, img, warmup + i, seed)
            ref.append((time.perf_counter() - t0) * 1e3)
    return FrameStats(width, height, samples, ref, bytes_per_frame(width, height))


BENCH_HEADER = "resolution frames mean_ms std_ms ref_mean_ms speedup"


def format_bench(stats_list) -> str:
    lines = [BENCH_HEADER]
    for st in stats_list:
        lines.append(
            f"{st.width}x{st.height} {st.frames} {st.mean_ms:.3f} {st.std_ms:.3f} "
            f"{st.ref_mean_ms:.3f} {st.speedup:.2f}"
        )
    return "\n".join(lines) + "\n"
