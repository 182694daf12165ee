"""Small shared helpers."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_cap() -> int:
    """Worker cap from VIBIAS_THREADS; 1 (sequential) when unset or invalid."""
    try:
        return max(1, int(os.environ.get("VIBIAS_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Order-preserving map, threaded when VIBIAS_THREADS allows it."""
    cap = min(thread_cap(), len(items)) if items else 1
    if cap <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, items))
