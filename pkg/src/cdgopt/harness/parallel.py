"""Worker-pool fan-out whose results never depend on scheduling."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

WORKERS_ENV = "CDG_WORKERS"


def resolve_workers(requested: int | None = None) -> int:
    """``requested``, else ``$CDG_WORKERS``, else the available CPU count."""
    if requested is not None:
        if requested < 1:
            raise ValueError("workers must be >= 1")
        return requested
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return value
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def ordered_map(fn: Callable, items: Iterable, workers: int) -> list:
    """``[fn(x) for x in items]``, possibly computed in worker processes.

    Every task carries its own seed, so the output is identical for any
    worker count.
    """
    items: Sequence = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
