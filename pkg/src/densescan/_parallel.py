"""Fork-join helpers for data-parallel row work.

Workers receive disjoint, contiguous index ranges and write only their
own slice of preallocated output arrays, so no locks are needed and the
result is identical for any worker count. numpy releases the GIL on
large array operations, which is where the actual parallelism comes
from.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np


def split_ranges(n: int, parts: int) -> list[tuple[int, int]]:
    """Split range(n) into at most `parts` contiguous, near-equal ranges."""
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1, dtype=np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(parts)
            if bounds[i] < bounds[i + 1]]


def run_partitioned(n: int, threads: int, worker: Callable[[int, int], None]) -> None:
    """Run worker(start, stop) over a partition of range(n), fork-join.

    threads <= 1 (or a trivially small n) runs inline. Exceptions from
    workers propagate to the caller.
    """
    if n <= 0:
        return
    ranges = split_ranges(n, threads)
    if len(ranges) == 1:
        worker(0, n)
        return
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futures = [pool.submit(worker, lo, hi) for lo, hi in ranges]
        for f in futures:
            f.result()
