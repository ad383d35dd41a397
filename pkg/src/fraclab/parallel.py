"""Deterministic thread mapping over per-index work.

Work item i draws from its own random stream and writes only slot i, so the
result is identical for any worker count; threads only change wall clock.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def for_each_index(fn, n: int, threads: int = 1) -> None:
    """Call fn(i) for i in range(n), optionally across a thread pool."""
    if threads <= 1 or n <= 1:
        for i in range(n):
            fn(i)
        return
    chunk = (n + threads - 1) // threads

    def run(lo: int) -> None:
        for i in range(lo, min(lo + chunk, n)):
            fn(i)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, range(0, n, chunk)))
