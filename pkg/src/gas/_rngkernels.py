"""Numba versions of the counter hash, shared by the rng module and the
fused deploy kernels so both produce the same bits."""
import math

import numpy as np
from numba import njit, prange

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_TWO_PI = 2.0 * math.pi
_INV53 = 2.0**-53


@njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(inline="always", cache=True)
def uniform_bits(key, counter):
    b = mix64(key + counter * _GOLDEN) >> _S11
    return (np.float64(b) + 0.5) * _INV53


@njit(inline="always", cache=True)
def normal_one(key, counter):
    u1 = uniform_bits(key, counter * _TWO)
    u2 = uniform_bits(key, counter * _TWO + _ONE)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit(parallel=True, cache=True)
def fill_normal(key, start, out):
    n = out.shape[0]
    for i in prange(n):
        out[i] = normal_one(key, start + np.uint64(i))


@njit(parallel=True, cache=True)
def gather_normal(key, counters, out):
    for i in prange(counters.shape[0]):
        out[i] = normal_one(key, counters[i])


@njit(parallel=True, cache=True)
def fill_uniform(key, start, out):
    n = out.shape[0]
    for i in prange(n):
        out[i] = uniform_bits(key, start + np.uint64(i))
