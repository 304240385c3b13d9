"""Counter-keyed random streams.

Every stream is identified by ``(seed, tag, *counters)``; the same key always
yields the same generator, so work split into fixed chunks gives identical
results whatever the execution order or worker count.
"""
from __future__ import annotations

import numpy as np

# stream tags
LEAF = 1
STEP = 2
TREE = 3
PROBE = 4

CHUNK = 16384


def stream(seed: int, tag: int, *counters: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag), *map(int, counters)))
    return np.random.Generator(np.random.PCG64(ss))


def chunks(n: int, size: int = CHUNK):
    """Yield ``(index, start, stop)`` for fixed-size slices of ``range(n)``."""
    for i, start in enumerate(range(0, n, size)):
        yield i, start, min(start + size, n)


def run_chunks(fn, n: int, workers: int = 1, size: int = CHUNK):
    """Call ``fn(index, start, stop)`` on every chunk, optionally on threads.

    ``fn`` must write its own disjoint output slice; results do not depend
    on ``workers``.
    """
    jobs = list(chunks(n, size))
    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            fn(*job)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        list(ex.map(lambda job: fn(*job), jobs))
