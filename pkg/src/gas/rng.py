"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, counter)``: a splitmix64
finalizer is applied to ``key(seed, stream) + counter * golden``.  Nothing
depends on call order beyond the counter, so tiles, threads and the fused
deploy kernels can reproduce the exact same samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rngkernels as _k

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
STREAM_MUL = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# stream ids for non-frame consumers
STREAM_CROPS = 0x0C0
STREAM_DISC_INIT = 0xD10
STREAM_DISC_NOISE = 0xD20
STREAM_PIPELINE_NOISE = 0xA00


def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    """64-bit key shared by every counter of one (seed, stream) pair."""
    k = _mix64_int((seed & MASK64) + GOLDEN)
    return _mix64_int(k ^ ((stream & MASK64) * STREAM_MUL & MASK64))


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def bits_at(seed: int, stream: int, counters) -> np.ndarray:
    """Raw 64-bit outputs for an array of counter positions."""
    c = np.asarray(counters, dtype=np.uint64)
    key = np.uint64(stream_key(seed, stream))
    with np.errstate(over="ignore"):
        return _mix64(key + c * np.uint64(GOLDEN))


def uniform_at(seed: int, stream: int, counters) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    b = bits_at(seed, stream, counters) >> np.uint64(11)
    return (b.astype(np.float64) + 0.5) * 2.0**-53


def normal_at(seed: int, stream: int, counters) -> np.ndarray:
    """Standard normals via Box-Muller, one per counter.

    Counter ``i`` consumes the two uniforms at raw positions ``2i`` and
    ``2i + 1``; only the cosine branch is used.  Evaluated with the same
    compiled scalar routine as :class:`CounterRng`, so the bits agree
    (numpy's own SIMD log and cos can differ from libm by an ulp).
    """
    c = np.asarray(counters, dtype=np.uint64)
    out = np.empty(c.size, dtype=np.float64)
    _k.gather_normal(np.uint64(stream_key(seed, stream)), np.ascontiguousarray(c.ravel()), out)
    return out.reshape(c.shape)


def normal_block(seed: int, stream: int, start: int, n: int) -> np.ndarray:
    """``n`` normals at counters ``start .. start + n - 1`` (compiled path)."""
    out = np.empty(n, dtype=np.float64)
    _k.fill_normal(np.uint64(stream_key(seed, stream)), np.uint64(start & MASK64), out)
    return out


@dataclass
class CounterRng:
    seed: int = 0
    stream: int = 0
    counter: int = 0

    def _take(self, n: int) -> np.ndarray:
        start = self.counter
        self.counter += n
        return np.arange(start, start + n, dtype=np.uint64)

    def normal(self, n: int) -> np.ndarray:
        start = self.counter
        self.counter += n
        return normal_block(self.seed, self.stream, start, n)

    def uniform(self, n: int) -> np.ndarray:
        start = self.counter
        self.counter += n
        out = np.empty(n, dtype=np.float64)
        _k.fill_uniform(np.uint64(stream_key(self.seed, self.stream)), np.uint64(start), out)
        return out

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` integers uniform on ``[0, high)``; modulo bias is below 2**-40."""
        if high <= 0:
            raise ValueError("high must be positive")
        b = bits_at(self.seed, self.stream, self._take(n))
        return (b % np.uint64(high)).astype(np.int64)

    def spawn(self, stream: int) -> "CounterRng":
        return CounterRng(self.seed, stream, 0)


def rng_normal(rng: CounterRng, n: int) -> np.ndarray:
    return rng.normal(n)
