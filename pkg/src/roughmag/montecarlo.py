"""Seeded substreams, path blocking and order-independent aggregation.

Monte Carlo work is split into fixed-size blocks of paths. Block ``b`` of
task ``key`` always draws from the same counter-based (Philox) substream,
so a run is reproducible bit-for-bit whatever the number of workers: blocks
are evaluated in any order and their results are concatenated in block
order before any reduction.
"""

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

BLOCK_SIZE = 250


def substream(seed, *key):
    """Independent Philox generator for ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n_paths, block_size=BLOCK_SIZE):
    """Sizes of consecutive path blocks covering ``n_paths``."""
    full, rest = divmod(int(n_paths), block_size)
    return [block_size] * full + ([rest] if rest else [])


def resolve_workers(workers):
    if workers in (None, "auto", 0):
        if hasattr(os, "sched_getaffinity"):
            return max(1, len(os.sched_getaffinity(0)))
        return max(1, os.cpu_count() or 1)
    return max(1, int(workers))


def map_blocks(fn, tasks, workers=1):
    """Evaluate ``fn(*task)`` for each task, returning results in task order.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        futs = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futs]


def concat(results, key=None):
    """Concatenate per-block arrays (or ``dict[key]`` entries) along axis 0."""
    if key is not None:
        results = [r[key] for r in results]
    return np.concatenate([np.asarray(r) for r in results], axis=0)


def mean_se(samples, axis=0):
    """Sample mean and its standard error along ``axis``."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    mean = x.mean(axis=axis)
    if n < 2:
        return mean, np.full_like(mean, np.inf)
    se = x.std(axis=axis, ddof=1) / np.sqrt(n)
    return mean, se
