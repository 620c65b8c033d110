"""Thread-capped, order-preserving map used for embarrassingly parallel work."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "SCHAUDER_LAB_THREADS"


def thread_cap() -> int:
    raw = os.environ.get(ENV_VAR, "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def ordered_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]`` evaluated on up to ``threads`` workers; result order is fixed."""
    items = list(items)
    n = min(threads or thread_cap(), len(items)) if items else 1
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
