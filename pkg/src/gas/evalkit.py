"""Histogram distances between image sets, and the pipeline gradient check."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BinningMismatch
from .image import load_png
from .pipeline import N_PARAMS, PipelineParams, from_vector, param_names, pipeline_bwd, pipeline_fwd, to_vector
from .rng import STREAM_PIPELINE_NOISE, CounterRng
from .shaders import draw_noise, softplus_inv

BINS = 256
STREAM_GRADCHECK = 0x6C0


@dataclass
class HistogramSet:
    """Normalized histograms, one row per channel (or statistic)."""

    hist: np.ndarray  # (rows, bins)
    labels: tuple = ("r", "g", "b")

    @property
    def bins(self) -> int:
        return self.hist.shape[1]


def _bin_index(values: np.ndarray, bins: int) -> np.ndarray:
    # bin k is centred on k / (bins - 1), same as 8-bit quantization
    return np.clip(np.floor(np.asarray(values) * (bins - 1) + 0.5), 0, bins - 1).astype(np.int64)


def _normalized(counts: np.ndarray) -> np.ndarray:
    counts = counts.astype(np.float64)
    return counts / counts.sum(axis=1, keepdims=True)


def color_histograms(images, bins: int = BINS) -> HistogramSet:
    """Per-channel histograms of gamma-encoded values over a set of images."""
    counts = np.zeros((3, bins), dtype=np.int64)
    for img in images:
        a = np.asarray(img)
        for c in range(3):
            counts[c] += np.bincount(_bin_index(a[c], bins).ravel(), minlength=bins)
    return HistogramSet(_normalized(counts))


def gradient_histograms(images, bins: int = BINS) -> HistogramSet:
    """Histograms of the channel-mean absolute horizontal and vertical differences."""
    counts = np.zeros((2, bins), dtype=np.int64)
    for img in images:
        a = np.asarray(img, dtype=np.float64)
        dx = np.abs(np.diff(a, axis=2)).mean(axis=0)
        dy = np.abs(np.diff(a, axis=1)).mean(axis=0)
        counts[0] += np.bincount(_bin_index(dx, bins).ravel(), minlength=bins)
        counts[1] += np.bincount(_bin_index(dy, bins).ravel(), minlength=bins)
    return HistogramSet(_normalized(counts), ("dx", "dy"))


def hist_distance(a: HistogramSet, b: HistogramSet) -> float:
    """Mean over rows of the 1-Wasserstein distance, in units of the value range."""
    if a.hist.shape != b.hist.shape:
        raise BinningMismatch(f"{a.hist.shape} vs {b.hist.shape}")
    width = 1.0 / (a.bins - 1)
    cdf_gap = np.abs(np.cumsum(a.hist, axis=1) - np.cumsum(b.hist, axis=1))
    return float(cdf_gap[:, :-1].sum(axis=1).mean() * width)


# --- gradient check -----------------------------------------------------------


@dataclass
class GradCheckReport:
    names: list
    analytic: np.ndarray
    numeric: np.ndarray
    rel_err: np.ndarray
    threshold: float

    @property
    def worst(self) -> tuple[str, float]:
        i = int(np.argmax(self.rel_err))
        return self.names[i], float(self.rel_err[i])

    @property
    def failures(self) -> list[str]:
        return [n for n, e in zip(self.names, self.rel_err) if not e <= self.threshold]

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = ["param analytic numeric rel_err"]
        for n, a, f, e in zip(self.names, self.analytic, self.numeric, self.rel_err):
            out.append(f"{n} {a:.9e} {f:.9e} {e:.3e}")
        return out


def relative_error(a, f) -> np.ndarray:
    a, f = np.asarray(a, float), np.asarray(f, float)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def gradcheck(p: PipelineParams, img, seed: int = 0, h: float = 2e-3, threshold: float = 1e-3,
              noise: bool = True) -> GradCheckReport:
    """Central differences against ``pipeline_bwd`` for all 42 scalars.

    The scalar objective is a fixed random projection of the output; noise
    draws are drawn once and reused for every evaluation.  At identity init
    the bloom gradients are ~1e-10, so much smaller steps drown in float64
    rounding; much larger ones feel the curvature of the steep glow sigmoid.
    """
    x = np.asarray(img, dtype=np.float64)
    if x.shape[1] > 64 or x.shape[2] > 64:
        raise ValueError("gradcheck is meant for images up to 64x64")
    proj = CounterRng(seed, STREAM_GRADCHECK).normal(x.size).reshape(x.shape)
    draws = draw_noise(CounterRng(seed, STREAM_PIPELINE_NOISE), x.shape) if noise else None

    def objective(q: PipelineParams) -> float:
        out, _ = pipeline_fwd(x, q, train_mode=False, noise=noise, draws=draws)
        return float(np.sum(proj * out.data))

    _, tape = pipeline_fwd(x, p, train_mode=True, noise=noise, draws=draws)
    analytic = pipeline_bwd(proj, tape).vector()
    base = to_vector(p)
    numeric = np.empty(N_PARAMS)
    for i in range(N_PARAMS):
        up, down = base.copy(), base.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (objective(from_vector(up, p.gamma)) - objective(from_vector(down, p.gamma))) / (2 * h)
    return GradCheckReport(param_names(), analytic, numeric, relative_error(analytic, numeric), threshold)


def random_params(seed: int) -> PipelineParams:
    """A parameter point away from init where every stage is active but unsaturated."""
    rng = CounterRng(seed, STREAM_GRADCHECK + 1)
    u = lambda n, lo, hi: lo + (hi - lo) * rng.uniform(n)  # noqa: E731
    p = PipelineParams()
    p.lens.kx_raw = p.lens.kx_raw + u(5, 0.0, 0.3)
    p.lens.ky_raw = p.lens.ky_raw + u(5, 0.0, 0.3)
    p.color.m = np.eye(3) + 0.05 * rng.normal(9).reshape(3, 3)
    p.color.t = 0.02 * rng.normal(3)
    for lvl in p.bloom_levels:
        lvl.a = float(u(1, 0.7, 1.0)[0])
        lvl.b_raw = float(softplus_inv(u(1, 2.0, 5.0)[0]))
        lvl.logvar_x, lvl.logvar_y = (float(v) for v in u(2, -1.0, 1.0))
    p.bloom_tone.eps_raw = float(softplus_inv(u(1, 0.2, 1.0)[0]))
    p.bloom_tone.s_raw = float(softplus_inv(u(1, 3.0, 4.0)[0]))
    p.noise.gamma_raw = float(softplus_inv(u(1, 1e-4, 1e-3)[0]))
    p.noise.sigma_raw = float(softplus_inv(u(1, 1e-3, 5e-3)[0]))
    return p


def random_image(seed: int, size: int = 16) -> np.ndarray:
    return 0.1 + 0.8 * CounterRng(seed, STREAM_GRADCHECK + 2).uniform(3 * size * size).reshape(3, size, size)


# --- dataset comparison -------------------------------------------------------


@dataclass
class EvalMetrics:
    n_source: int
    n_target: int
    color_source: float
    color_enhanced: float
    grad_source: float
    grad_enhanced: float

    def items(self):
        for k in ("n_source", "n_target", "color_source", "color_enhanced", "grad_source", "grad_enhanced"):
            yield k, getattr(self, k)

    def table(self) -> str:
        return (
            "metric source enhanced\n"
            f"color_w1 {self.color_source:.6f} {self.color_enhanced:.6f}\n"
            f"gradient_w1 {self.grad_source:.6f} {self.grad_enhanced:.6f}\n"
        )


def load_image_dir(directory) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise FileNotFoundError(f"no PNG files in {directory}")
    return [load_png(p).data for p in paths]


def enhance(params: PipelineParams, images, seed: int = 0, noise: bool = True) -> list[np.ndarray]:
    """Image ``i`` goes through the fused path as frame ``i``."""
    from .deploy import compile_pipeline, run_frame

    cp = compile_pipeline(params)
    return [run_frame(cp, img, i, seed, noise=noise).data.copy() for i, img in enumerate(images)]


def compare_sets(source, enhanced, target) -> EvalMetrics:
    tc, tg = color_histograms(target), gradient_histograms(target)
    return EvalMetrics(
        len(source),
        len(target),
        hist_distance(color_histograms(source), tc),
        hist_distance(color_histograms(enhanced), tc),
        hist_distance(gradient_histograms(source), tg),
        hist_distance(gradient_histograms(enhanced), tg),
    )


def eval_run(params: PipelineParams, source_dir, target_dir, seed: int = 0, noise: bool = True) -> EvalMetrics:
    """Color and gradient-statistics distances to the target set, before and after the pipeline."""
    source, target = load_image_dir(source_dir), load_image_dir(target_dir)
    return compare_sets(source, enhance(params, source, seed, noise), target)
