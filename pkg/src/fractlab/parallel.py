"""Thread-count resolution and an order-preserving parallel map.

Work is always split into chunks whose boundaries depend only on the problem
size, never on the thread count, and partial results are combined in chunk
order.  That keeps every reduction bit-identical for any ``threads`` value.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "FRACTLAB_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get(ENV_VAR)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunk_bounds(n: int, chunk: int) -> list[tuple[int, int]]:
    chunk = max(1, int(chunk))
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
