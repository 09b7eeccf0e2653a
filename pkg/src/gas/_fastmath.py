"""Branch-free log, exp and cos for the fused deploy pass.

libm calls cannot be vectorized by LLVM, and in the final pass they cost more
than everything else together.  These versions are plain polynomials after
an exact range reduction, so loops that use them vectorize.  Accuracy is a
few ulp over the ranges the deploy kernels feed them.
"""
import math

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

from ._rngkernels import mix64

LN2 = math.log(2.0)
_INV_LN2 = 1.0 / LN2
# Cody-Waite split of ln 2 (fdlibm constants): k * _LN2_HI is exact
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_SQRT2 = math.sqrt(2.0)
_TWO_PI = 2.0 * math.pi
_INV53 = 2.0**-53
_MANTISSA = np.int64(0x000FFFFFFFFFFFFF)
_ONE_BITS = np.int64(0x3FF0000000000000)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_TINY = 2.2250738585072014e-308


@intrinsic
def _as_bits(typingctx, x):
    sig = types.int64(types.float64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.IntType(64))

    return sig, codegen


@intrinsic
def _from_bits(typingctx, b):
    sig = types.float64(types.int64)

    def codegen(context, builder, signature, args):
        return builder.bitcast(args[0], ir.DoubleType())

    return sig, codegen


@njit(inline="always", cache=True, error_model="numpy")
def log_pos(x):
    """Natural log for positive normal doubles."""
    bits = _as_bits(x)
    e = (bits >> 52) - 1023
    m = _from_bits((bits & _MANTISSA) | _ONE_BITS)
    big = m > _SQRT2
    m = m * 0.5 if big else m
    e = e + 1 if big else e
    s = (m - 1.0) / (m + 1.0)
    z = s * s
    # 2 atanh(s); |s| <= 0.172 so twelve odd terms reach double precision
    p = 1.0 / 23.0
    p = p * z + 1.0 / 21.0
    p = p * z + 1.0 / 19.0
    p = p * z + 1.0 / 17.0
    p = p * z + 1.0 / 15.0
    p = p * z + 1.0 / 13.0
    p = p * z + 1.0 / 11.0
    p = p * z + 1.0 / 9.0
    p = p * z + 1.0 / 7.0
    p = p * z + 1.0 / 5.0
    p = p * z + 1.0 / 3.0
    p = p * z + 1.0
    return e * LN2 + 2.0 * s * p


@njit(inline="always", cache=True, error_model="numpy")
def exp_(x):
    """exp for x in [-708, 709]; arguments outside are clamped."""
    x = min(max(x, -708.0), 709.0)
    k = math.floor(x * _INV_LN2 + 0.5)
    r = (x - k * _LN2_HI) - k * _LN2_LO
    p = 1.0 / 6227020800.0
    p = p * r + 1.0 / 479001600.0
    p = p * r + 1.0 / 39916800.0
    p = p * r + 1.0 / 3628800.0
    p = p * r + 1.0 / 362880.0
    p = p * r + 1.0 / 40320.0
    p = p * r + 1.0 / 5040.0
    p = p * r + 1.0 / 720.0
    p = p * r + 1.0 / 120.0
    p = p * r + 1.0 / 24.0
    p = p * r + 1.0 / 6.0
    p = p * r + 0.5
    p = p * r + 1.0
    p = p * r + 1.0
    # split 2^k in two so k = 1024 and k = -1022 stay representable
    h = np.int64(k) >> 1
    return p * _from_bits((h + 1023) << 52) * _from_bits((np.int64(k) - h + 1023) << 52)


@njit(inline="always", cache=True, error_model="numpy")
def pow_pos(x, y):
    """x**y for x >= 0 and y > 0 (zero and subnormal x give 0)."""
    r = exp_(y * log_pos(max(x, _TINY)))
    return r if x >= _TINY else 0.0


@njit(inline="always", cache=True, error_model="numpy")
def cos_2pi(u):
    """cos(2 pi u) for any finite u."""
    t = u - math.floor(u + 0.5)  # [-0.5, 0.5)
    a = abs(t)
    flip = a > 0.25
    b = 0.5 - a if flip else a  # [0, 0.25]
    x = _TWO_PI * b
    z = x * x
    p = 1.0 / 1124000727777607680000.0
    p = -p * z + 1.0 / 2432902008176640000.0
    p = p * z - 1.0 / 6402373705728000.0
    p = p * z + 1.0 / 20922789888000.0
    p = p * z - 1.0 / 87178291200.0
    p = p * z + 1.0 / 479001600.0
    p = p * z - 1.0 / 3628800.0
    p = p * z + 1.0 / 40320.0
    p = p * z - 1.0 / 720.0
    p = p * z + 1.0 / 24.0
    p = p * z - 0.5
    p = p * z + 1.0
    return -p if flip else p


@njit(inline="always", cache=True, error_model="numpy")
def _uniform(key, counter):
    b = mix64(key + counter * _GOLDEN) >> _S11
    return (np.float64(b) + 0.5) * _INV53


@njit(inline="always", cache=True, error_model="numpy")
def normal_fast(key, counter):
    """Same draw as ``normal_one`` up to rounding (about 1e-15)."""
    u1 = _uniform(key, counter * _TWO)
    u2 = _uniform(key, counter * _TWO + _ONE)
    return math.sqrt(-2.0 * log_pos(u1)) * cos_2pi(u2)
