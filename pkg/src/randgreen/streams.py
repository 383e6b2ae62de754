"""Counter-based random streams and the deterministic worker pool.

A stream is addressed by ``(seed, tag, *indices)`` and backed by Philox, so
sample chunk ``c`` always sees the same numbers no matter which worker draws
it or in which order chunks complete.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 4096

MASK64 = (1 << 64) - 1


def _tag_id(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def stream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent generator for the address ``(seed, tag, *indices)``."""
    words = [int(seed) & MASK64, _tag_id(tag)] + [int(i) & MASK64 for i in indices]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(count: int, chunk: int = CHUNK):
    """Yield ``(chunk_index, start, stop)`` covering ``range(count)``."""
    for c, start in enumerate(range(0, count, chunk)):
        yield c, start, min(count, start + chunk)


def worker_count() -> int:
    env = os.environ.get("RANDGREEN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_ordered(fn, items):
    """``[fn(x) for x in items]`` on the thread pool, results in input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
