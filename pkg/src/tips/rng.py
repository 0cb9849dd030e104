"""Deterministic random streams and block-parallel execution.

Every stream is a Philox generator keyed by ``(seed, *key)`` through
``SeedSequence.spawn_key``, so a stream depends only on where it sits in
the computation and never on scheduling. Particles are grouped into
fixed-size blocks; each block owns one stream. Because the block size is a
constant, serial and multi-process runs draw identical numbers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
import multiprocessing

import numpy as np

BLOCK_SIZE = 256
WORKERS_ENV = "TIPS_WORKERS"

# stream tags, kept distinct so different consumers of one seed never collide
FORWARD = 1
TIPS = 2
SMC = 3
GIMH = 4
SIMULATE = 5
SWEEP = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
    )


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for a child computation."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


_executors: dict[int, ProcessPoolExecutor] = {}


def _executor(workers: int) -> ProcessPoolExecutor:
    ex = _executors.get(workers)
    if ex is None:
        ctx = multiprocessing.get_context("fork")
        ex = ProcessPoolExecutor(max_workers=workers, mp_context=ctx)
        _executors[workers] = ex
    return ex


def blocks(n_items: int, block_size: int = BLOCK_SIZE):
    return [(b, b * block_size, min(n_items, (b + 1) * block_size))
            for b in range((n_items + block_size - 1) // block_size)]


def map_blocks(fn, n_items: int, workers: int = 1, block_size: int = BLOCK_SIZE) -> list:
    """Apply ``fn(block_index, start, stop)`` to every block, in block order.

    ``fn`` must be picklable when ``workers > 1``. The concatenated results
    do not depend on ``workers``.
    """
    spec = blocks(n_items, block_size)
    if workers <= 1 or len(spec) <= 1:
        out = []
        for b, lo, hi in spec:
            out.extend(fn(b, lo, hi))
        return out
    ex = _executor(workers)
    futures = [ex.submit(fn, b, lo, hi) for b, lo, hi in spec]
    out = []
    for f in futures:
        out.extend(f.result())
    return out
