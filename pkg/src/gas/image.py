"""Planar float images: PNG I/O, gamma curves, luma, resampling and crops.

Arrays are channel-major ``(C, H, W)``.  Functions accept either an
:class:`ImageBuf` or a bare array and hand back the same kind.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import cv2
import numpy as np
import scipy.sparse as sp

from .errors import NegativeSample, OutOfBounds, UnsupportedFormat, ZeroDimension

LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
DEFAULT_GAMMA = 2.2

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_PNG_RGB = 2
_PNG_RGBA = 6


class ColorSpace(enum.Enum):
    GAMMA = "gamma"
    LINEAR = "linear"


@dataclass
class ImageBuf:
    data: np.ndarray
    color_space: ColorSpace = ColorSpace.GAMMA

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise ValueError(f"expected (C, H, W) data, got shape {self.data.shape}")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _unwrap(img):
    if isinstance(img, ImageBuf):
        return img.data, img.color_space
    return np.asarray(img), None


def _rewrap(arr, space):
    return arr if space is None else ImageBuf(arr, space)


def _png_header(path: Path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(29)
    if len(head) < 29 or head[:8] != _PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise UnsupportedFormat(f"{path}: not a PNG file")
    bit_depth, color_type = struct.unpack(">BB", head[24:26])
    return bit_depth, color_type


def load_png(path) -> ImageBuf:
    """Read an 8/16-bit RGB or RGBA PNG into a gamma-encoded float64 buffer."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    bit_depth, color_type = _png_header(path)
    if color_type not in (_PNG_RGB, _PNG_RGBA) or bit_depth not in (8, 16):
        raise UnsupportedFormat(
            f"{path}: color type {color_type} at {bit_depth} bits (need 8/16-bit RGB or RGBA)"
        )
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.ndim != 3:
        raise UnsupportedFormat(f"{path}: decoder returned no RGB data")
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    rgb = raw[:, :, 2::-1]  # BGR(A) -> RGB, alpha dropped
    data = np.ascontiguousarray(rgb.transpose(2, 0, 1), dtype=np.float64) / scale
    return ImageBuf(data, ColorSpace.GAMMA)


def quantize8(data) -> np.ndarray:
    """Clamp to [0, 1] and round half-up onto the 8-bit grid."""
    arr = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def save_png(img, path) -> None:
    arr, _ = _unwrap(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError("save_png needs a 3-channel image")
    q = quantize8(arr).transpose(1, 2, 0)[:, :, ::-1]
    path = Path(path)
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise OSError(f"could not write {path}")


def to_linear(img, gamma: float = DEFAULT_GAMMA):
    arr, space = _unwrap(img)
    if np.any(arr < 0):
        raise NegativeSample("to_linear needs non-negative samples")
    return _rewrap(arr**gamma, None if space is None else ColorSpace.LINEAR)


def to_gamma(img, gamma: float = DEFAULT_GAMMA):
    arr, space = _unwrap(img)
    if np.any(arr < 0):
        raise NegativeSample("to_gamma needs non-negative samples")
    return _rewrap(arr ** (1.0 / gamma), None if space is None else ColorSpace.GAMMA)


def luma(img):
    """Rec. 709 luma as a single-channel image."""
    arr, space = _unwrap(img)
    if arr.shape[0] != 3:
        raise ValueError("luma needs a 3-channel image")
    out = np.tensordot(LUMA_WEIGHTS, arr, axes=(0, 0))[None]
    return _rewrap(out, space)


# --- resampling -----------------------------------------------------------
#
# Each resampler is a separable linear operator built from two sparse 1-D
# matrices.  The adjoints are the transposed matrices, which is what the
# backward passes of the bloom pyramid use.


@lru_cache(maxsize=64)
def half_matrix(n: int) -> sp.csr_matrix:
    """``ceil(n/2) x n`` block-mean matrix; a trailing odd sample averages alone."""
    if n < 1:
        raise ZeroDimension("cannot resample an empty axis")
    m = (n + 1) // 2
    rows, cols, vals = [], [], []
    for i in range(m):
        members = [j for j in (2 * i, 2 * i + 1) if j < n]
        for j in members:
            rows.append(i)
            cols.append(j)
            vals.append(1.0 / len(members))
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


@lru_cache(maxsize=64)
def bilinear_matrix(n_in: int, n_out: int) -> sp.csr_matrix:
    """``n_out x n_in`` bilinear interpolation with half-pixel centres and edge clamp."""
    if n_in < 1 or n_out < 1:
        raise ZeroDimension("cannot resample an empty axis")
    dst = np.arange(n_out, dtype=np.float64)
    src = np.clip((dst + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.concatenate([np.arange(n_out), np.arange(n_out)])
    cols = np.concatenate([i0, i1])
    vals = np.concatenate([1.0 - frac, frac])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_out, n_in))


def _apply_separable(arr: np.ndarray, mh: sp.spmatrix, mw: sp.spmatrix) -> np.ndarray:
    c, h, w = arr.shape
    # rows: (h_out x h) @ (h, c*w)
    t = mh @ arr.transpose(1, 0, 2).reshape(h, c * w)
    t = t.reshape(mh.shape[0], c, w).transpose(1, 0, 2)
    # cols: (c*h_out, w) @ (w x w_out)
    out = (mw @ t.reshape(-1, w).T).T
    return np.ascontiguousarray(out.reshape(c, mh.shape[0], mw.shape[0]))


def downsample_half(img):
    arr, space = _unwrap(img)
    _, h, w = arr.shape
    return _rewrap(_apply_separable(arr, half_matrix(h), half_matrix(w)), space)


def downsample_half_adjoint(grad, height: int, width: int) -> np.ndarray:
    g, _ = _unwrap(grad)
    return _apply_separable(g, half_matrix(height).T.tocsr(), half_matrix(width).T.tocsr())


def upsample_to(img, width: int, height: int):
    arr, space = _unwrap(img)
    if width < 1 or height < 1:
        raise ZeroDimension("target size must be positive")
    _, h, w = arr.shape
    return _rewrap(
        _apply_separable(arr, bilinear_matrix(h, height), bilinear_matrix(w, width)), space
    )


def upsample_adjoint(grad, in_width: int, in_height: int) -> np.ndarray:
    g, _ = _unwrap(grad)
    _, height, width = g.shape
    mh = bilinear_matrix(in_height, height).T.tocsr()
    mw = bilinear_matrix(in_width, width).T.tocsr()
    return _apply_separable(g, mh, mw)


def crop(img, x0: int, y0: int, w: int, h: int):
    arr, space = _unwrap(img)
    _, height, width = arr.shape
    if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > width or y0 + h > height:
        raise OutOfBounds(f"crop ({x0}, {y0}, {w}, {h}) outside {width}x{height}")
    return _rewrap(arr[:, y0 : y0 + h, x0 : x0 + w].copy(), space)
