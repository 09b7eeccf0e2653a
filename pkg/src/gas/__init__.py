"""Differentiable camera post-processing shaders trained adversarially."""
import numba as _numba

# the TBB layer shipped here is too old; OpenMP keeps prange schedules stable
_numba.config.THREADING_LAYER = "omp"

from .image import ColorSpace, ImageBuf, load_png, save_png  # noqa: E402
from .pipeline import PipelineParams, load_params, pipeline_bwd, pipeline_fwd, save_params  # noqa: E402
from .rng import CounterRng  # noqa: E402

__all__ = [
    "ColorSpace",
    "CounterRng",
    "ImageBuf",
    "PipelineParams",
    "load_params",
    "load_png",
    "pipeline_bwd",
    "pipeline_fwd",
    "save_params",
    "save_png",
]
__version__ = "0.1.0"
