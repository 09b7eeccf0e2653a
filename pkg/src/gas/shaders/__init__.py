"""The four learnable shader stages, each a forward/backward pair."""
from ._common import Tape, conv_axis, conv_axis_bwd, sigmoid, softplus, softplus_inv
from .bloom import (
    BLUR_RADIUS,
    N_LEVELS,
    BloomLevelParams,
    BloomToneParams,
    bloom_bwd,
    bloom_fwd,
    default_levels,
    gaussian_kernel,
    glow_mask,
    glow_mask_bwd,
    tone_constant,
    tone_curve,
)
from .color_map import ColorMapParams, color_map_bwd, color_map_fwd
from .lens_blur import LensBlurParams, lens_blur_bwd, lens_blur_fwd, normalize_kernel
from .noise import NoiseParams, draw_noise, noise_bwd, noise_fwd

__all__ = [
    "BLUR_RADIUS",
    "N_LEVELS",
    "BloomLevelParams",
    "BloomToneParams",
    "ColorMapParams",
    "LensBlurParams",
    "NoiseParams",
    "Tape",
    "bloom_bwd",
    "bloom_fwd",
    "color_map_bwd",
    "color_map_fwd",
    "conv_axis",
    "conv_axis_bwd",
    "default_levels",
    "draw_noise",
    "gaussian_kernel",
    "glow_mask",
    "glow_mask_bwd",
    "lens_blur_bwd",
    "lens_blur_fwd",
    "noise_bwd",
    "noise_fwd",
    "normalize_kernel",
    "sigmoid",
    "softplus",
    "softplus_inv",
    "tone_constant",
    "tone_curve",
]
