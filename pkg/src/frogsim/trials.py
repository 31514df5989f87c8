"""Chunked execution of independent trials.

Trial ``i`` always draws from stream ``(master_seed, i)``, and chunk
boundaries are fixed multiples of :data:`CHUNK`, so aggregated integer
results do not depend on how many worker threads run the chunks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError

CHUNK = 2048
THREADS_ENV = "FROGSIM_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {raw!r}")
    return n


def chunks(trials: int):
    return [(lo, min(lo + CHUNK, trials)) for lo in range(0, trials, CHUNK)]


def run_chunked(kernel, trials: int, threads: int | None = None):
    """Sum ``kernel(lo, hi)`` over fixed trial chunks.

    ``kernel`` returns a tuple of integers / integer arrays; kernels are
    compiled with ``nogil`` so threads run them concurrently.
    """
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ConfigError("threads", f"must be >= 1, got {threads}")
    parts = chunks(trials)
    if threads == 1 or len(parts) == 1:
        results = [kernel(lo, hi) for lo, hi in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: kernel(*c), parts))
    if not results:
        return None
    total = [np.array(r, copy=True) if isinstance(r, np.ndarray) else r for r in results[0]]
    for r in results[1:]:
        for i, x in enumerate(r):
            total[i] = total[i] + x
    return tuple(total)


def concat_chunked(kernel, trials: int, threads: int | None = None) -> np.ndarray:
    """Concatenate per-trial rows returned by ``kernel(lo, hi)`` in trial order."""
    threads = default_threads() if threads is None else int(threads)
    parts = chunks(trials)
    if threads == 1 or len(parts) <= 1:
        results = [kernel(lo, hi) for lo, hi in parts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: kernel(*c), parts))
    return np.concatenate(results) if results else np.empty(0)
