"""Worker-pool sizing from ``GAS_THREADS``."""
from __future__ import annotations

import os

import numba
from threadpoolctl import threadpool_limits

_limiter = None


def thread_count() -> int:
    env = os.environ.get("GAS_THREADS", "").strip()
    n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    return max(1, min(n, numba.config.NUMBA_NUM_THREADS))


def configure_threads(n: int | None = None) -> int:
    """Cap numba and BLAS pools; returns the count in effect."""
    global _limiter
    n = thread_count() if n is None else max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    _limiter = threadpool_limits(limits=n)
    return n
