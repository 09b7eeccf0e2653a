"""Fused float32 inference kernels.

Pass plan per frame:
  1. horizontal lens blur                  (full res)
  2. vertical lens blur + colour affine    (full res)
  3. per level: downsample, glow mask, gaussian x, gaussian y
  4. pyramid upsample-sum + tone curve + inverse gamma + noise + gamma + clamp
"""
import math

import numpy as np
from numba import njit, prange

from ._fastmath import exp_, normal_fast, pow_pos

LUMA_R = 0.2126
LUMA_G = 0.7152
LUMA_B = 0.0722


@njit(inline="always", cache=True, error_model="numpy")
def _clamp_index(i, n):
    if i < 0:
        return 0
    if i >= n:
        return n - 1
    return i


@njit(inline="always", cache=True, error_model="numpy")
def _row_blur(row, k, dst):
    # interior taps never clamp, so the x loop is branch free
    w = row.shape[0]
    n = k.shape[0]
    r = n // 2
    for x in range(w):
        dst[x] = 0.0
    lo = min(r, w)
    hi = max(w - r, lo)
    span = hi - lo
    out = dst[lo:hi]
    for j in range(n):
        kj = k[j]
        shifted = row[lo + r - j : lo + r - j + span]
        for i in range(span):
            out[i] += kj * shifted[i]
    for x in range(0, lo):
        acc = 0.0
        for j in range(n):
            acc += k[j] * row[_clamp_index(x + r - j, w)]
        dst[x] = acc
    for x in range(hi, w):
        acc = 0.0
        for j in range(n):
            acc += k[j] * row[_clamp_index(x + r - j, w)]
        dst[x] = acc


@njit(parallel=True, cache=True, error_model="numpy")
def blur_rows(src, k, dst):
    c_n, h, _ = src.shape
    for y in prange(h):
        for c in range(c_n):
            _row_blur(src[c, y], k, dst[c, y])


@njit(inline="always", cache=True, error_model="numpy")
def _col_accumulate(src, k, c, y, dst_row):
    _, h, w = src.shape
    r = k.shape[0] // 2
    for x in range(w):
        dst_row[x] = 0.0
    for j in range(k.shape[0]):
        kj = k[j]
        s = src[c, _clamp_index(y + r - j, h)]
        for x in range(w):
            dst_row[x] += kj * s[x]


@njit(parallel=True, cache=True, error_model="numpy")
def blur_cols(src, k, dst):
    c_n, h, _ = src.shape
    for y in prange(h):
        for c in range(c_n):
            _col_accumulate(src, k, c, y, dst[c, y])


@njit(parallel=True, cache=True, error_model="numpy")
def blur_cols_affine(src, k, m, t, dst):
    _, h, w = src.shape
    for y in prange(h):
        for c in range(3):
            _col_accumulate(src, k, c, y, dst[c, y])
        for x in range(w):
            v0 = dst[0, y, x]
            v1 = dst[1, y, x]
            v2 = dst[2, y, x]
            dst[0, y, x] = m[0, 0] * v0 + m[0, 1] * v1 + m[0, 2] * v2 + t[0]
            dst[1, y, x] = m[1, 0] * v0 + m[1, 1] * v1 + m[1, 2] * v2 + t[1]
            dst[2, y, x] = m[2, 0] * v0 + m[2, 1] * v1 + m[2, 2] * v2 + t[2]


@njit(parallel=True, cache=True, error_model="numpy")
def downsample_half(src, dst):
    c_n, h, w = src.shape
    _, ho, wo = dst.shape
    for i in prange(ho):
        y0 = 2 * i
        ny = 2 if y0 + 1 < h else 1
        for c in range(c_n):
            for j in range(wo):
                x0 = 2 * j
                nx = 2 if x0 + 1 < w else 1
                acc = 0.0
                for yy in range(y0, y0 + ny):
                    for xx in range(x0, x0 + nx):
                        acc += src[c, yy, xx]
                dst[c, i, j] = acc / (nx * ny)


@njit(parallel=True, cache=True, error_model="numpy")
def glow_mask(src, a, b, dst):
    _, h, w = src.shape
    for y in prange(h):
        for x in range(w):
            r = src[0, y, x]
            g = src[1, y, x]
            bl = src[2, y, x]
            lum = LUMA_R * r + LUMA_G * g + LUMA_B * bl
            f = 1.0 / (1.0 + math.exp(-b * (lum - a)))
            dst[0, y, x] = r * f
            dst[1, y, x] = g * f
            dst[2, y, x] = bl * f


@njit(inline="always", cache=True, error_model="numpy")
def _lut_lookup(lut, v):
    pos = v * (lut.shape[0] - 1)
    i = min(int(pos), lut.shape[0] - 2)  # v == 1 lands on the last interval with f == 1
    f = pos - i
    return lut[i] + f * (lut[i + 1] - lut[i])


@njit(inline="always", cache=True, error_model="numpy")
def _vlerp(level, c, i0, i1, f, row):
    a = level[c, i0]
    b = level[c, i1]
    g = 1.0 - f
    for x in range(a.shape[0]):
        row[x] = g * a[x] + f * b[x]


@njit(parallel=True, cache=True, error_model="numpy")
def finish(base, b0, b1, b2, b3,
           y0s, y1s, fys, x0s, x1s, fxs,
           tone_k, eps, noise_on, gain, sigma, gamma, use_lut, lut, key, rows, out):
    """Pyramid sum, tone curve, noise in linear light, clamp.

    ``y0s[l]``, ``x0s[l]`` ... hold the bilinear taps from full resolution
    into level ``l`` (level 0 is sampled directly). ``rows`` is per-worker
    scratch of shape ``(workers, 4, width)``; rows are dealt out in fixed
    contiguous blocks so results do not depend on scheduling.  The arithmetic
    loops are free of libm calls so they vectorize.
    """
    c_n, h, w = base.shape
    plane = h * w
    total = np.uint64(c_n * plane)
    inv_gamma = 1.0 / gamma
    workers = rows.shape[0]
    block = (h + workers - 1) // workers
    for t in prange(workers):
        r1 = rows[t, 0]
        r2 = rows[t, 1]
        r3 = rows[t, 2]
        tone = rows[t, 3]
        for y in range(t * block, min(h, (t + 1) * block)):
            for c in range(c_n):
                _vlerp(b1, c, y0s[1, y], y1s[1, y], fys[1, y], r1)
                _vlerp(b2, c, y0s[2, y], y1s[2, y], fys[2, y], r2)
                _vlerp(b3, c, y0s[3, y], y1s[3, y], fys[3, y], r3)
                # the bilinear gathers do not vectorize, so they get their own loop
                for x in range(w):
                    acc = b0[c, y, x]
                    acc += (1.0 - fxs[1, x]) * r1[x0s[1, x]] + fxs[1, x] * r1[x1s[1, x]]
                    acc += (1.0 - fxs[2, x]) * r2[x0s[2, x]] + fxs[2, x] * r2[x1s[2, x]]
                    acc += (1.0 - fxs[3, x]) * r3[x0s[3, x]] + fxs[3, x] * r3[x1s[3, x]]
                    tone[x] = acc
                for x in range(w):
                    v = tone_k * (1.0 - exp_(-eps * (base[c, y, x] + tone[x])))
                    tone[x] = min(max(v, 0.0), 1.0)
                if not noise_on:
                    for x in range(w):
                        out[c, y, x] = tone[x]
                    continue
                # linear light first, so the table branch stays out of the noise loop
                if use_lut:
                    for x in range(w):
                        tone[x] = _lut_lookup(lut, tone[x])
                else:
                    for x in range(w):
                        tone[x] = pow_pos(tone[x], gamma)
                row0 = np.uint64(c * plane + y * w)
                for x in range(w):
                    lin = tone[x]
                    idx = row0 + np.uint64(x)
                    n1 = normal_fast(key, idx)
                    n2 = normal_fast(key, idx + total)
                    o = lin + math.sqrt(gain * lin) * n1 + sigma * n2
                    v = pow_pos(o, inv_gamma) if o > 0.0 else 0.0
                    out[c, y, x] = min(v, 1.0)
