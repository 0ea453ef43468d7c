import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

from app.core.config import get_settings
from app.core.seeding import make_rng

T = TypeVar("T")


def resolve_threads(threads: int | None) -> int:
    """
    --threads wins; otherwise SHELAB_THREADS; otherwise the CPU count.
    """
    if threads is None:
        threads = get_settings().THREADS
    if threads is None:
        threads = os.cpu_count() or 1
    return max(int(threads), 1)


class ReplicationRunner:
    """
    Runs independent replications on a thread pool.

    Replication i receives a generator seeded by derive_seed(seed, i), so
    results depend only on (seed, i) and come back in index order for any
    thread budget.
    """

    @staticmethod
    def map(
        fn: Callable[[int, np.random.Generator], T],
        *,
        seed: int,
        count: int,
        threads: int | None = None,
        offset: int = 0,
    ) -> list[T]:
        threads = resolve_threads(threads)

        def job(i: int) -> T:
            return fn(i, make_rng(seed, i))

        indices = range(offset, offset + count)
        if threads == 1 or count <= 1:
            return [job(i) for i in indices]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, indices))
