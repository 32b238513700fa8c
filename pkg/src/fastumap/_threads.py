"""Thread-count control for the parallel numba kernels."""
from __future__ import annotations

import os

import numba

THREADS_ENV = "FASTUMAP_THREADS"

if "NUMBA_THREADING_LAYER" not in os.environ:
    # try OpenMP before TBB: an outdated system TBB only triggers a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def set_threads(n=None) -> int:
    """Cap the numba worker count; ``None`` reads ``FASTUMAP_THREADS``.

    Returns the number of threads in effect.
    """
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return numba.get_num_threads()
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if n < 1:
        raise ValueError("thread count must be >= 1")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n
