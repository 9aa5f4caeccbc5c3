"""Numerical backend selection and worker-pool helpers.

Hot kernels ship in two flavours: numba @njit and plain numpy.  The active
flavour is chosen once at import time from the SHOTMIX_BACKEND environment
variable ("numba" or "numpy").  Unset means numba when importable, numpy
otherwise.  SHOTMIX_THREADS caps worker parallelism for embarrassingly
parallel stages (0 or unset = one worker per CPU).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_ENV_BACKEND = "SHOTMIX_BACKEND"
_ENV_THREADS = "SHOTMIX_THREADS"


def _detect_backend() -> str:
    requested = os.environ.get(_ENV_BACKEND, "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_BACKEND} must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise ImportError(
                f"{_ENV_BACKEND}=numba requested but numba is not installed"
            )
        return "numpy"
    return "numba"


BACKEND = _detect_backend()


def using_numba() -> bool:
    return BACKEND == "numba"


def thread_count() -> int:
    """Worker cap from SHOTMIX_THREADS; 0 or unset means cpu count."""
    raw = os.environ.get(_ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{_ENV_THREADS} must be an integer, got {raw!r}")
    if n < 0:
        raise ValueError(f"{_ENV_THREADS} must be >= 0, got {n}")
    if n == 0:
        return os.cpu_count() or 1
    return n


def parallel_map(fn, items):
    """Map fn over items with at most thread_count() workers.

    Results come back in input order regardless of completion order, so
    output is deterministic as long as each task is.  A single worker (or a
    single item) short-circuits to a plain loop.
    """
    items = list(items)
    workers = min(thread_count(), len(items)) if items else 0
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
