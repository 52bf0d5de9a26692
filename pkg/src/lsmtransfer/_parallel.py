"""Order-preserving map over a worker pool."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

import numpy as np

WORKERS_ENV = "LSMTRANSFER_WORKERS"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        return max(int(value), 1)
    return 1


def pmap(fn: Callable, items: Iterable, workers: Optional[int] = None) -> List:
    """``[fn(x) for x in items]``, optionally spread over processes.

    Results come back in input order, so any reduction over them is
    independent of the worker count.
    """
    items = list(items)
    workers = default_workers() if workers is None else max(int(workers), 1)
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def derive_seed(*key: int) -> np.random.SeedSequence:
    """Seed sequence determined only by the integer ``key``."""
    return np.random.SeedSequence([int(k) % 2**64 for k in key])
