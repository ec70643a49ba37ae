"""Deterministic chunked thread mapping.

Work is split into fixed-size chunks (independent of the thread count) and
partial results are combined in chunk order, so outputs are bit-identical
across reruns and across --threads settings.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["resolve_threads", "chunked_map"]


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SPINMIX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def chunked_map(fn, items, threads: int | None = None, chunk: int = 16):
    """Apply fn to fixed-size chunks of items; return partials in chunk order.

    fn receives a list slice and must not mutate shared state.
    """
    items = list(items)
    chunks = [items[i : i + chunk] for i in range(0, len(items), chunk)]
    n = resolve_threads(threads)
    if n <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, chunks))
