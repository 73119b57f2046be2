"""
Order-preserving parallel map for sweeps and simulation chunks.

Work items are submitted to a thread pool and collected with `as_completed`;
results are written back by submission index, so the output never depends on
scheduling.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

from .settings import worker_count

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(
    func: Callable[[T], R],
    items: Sequence[T],
    max_workers: Optional[int] = None
) -> List[R]:
    """
    Apply `func` to every item, possibly concurrently, keeping input order.

    Args:
        func: Pure function of one item
        items: Work items
        max_workers: Worker cap (defaults to OLIGODYN_THREADS, then 1)

    Returns:
        List of results aligned with `items`

    Raises:
        Whatever `func` raises for the lowest-index failing item
    """
    workers = min(worker_count(max_workers), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]

    logger.debug(f"Dispatching {len(items)} items to {workers} workers")
    results: List[Optional[R]] = [None] * len(items)
    errors = {}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(func, item): index for index, item in enumerate(items)}
        for future in as_completed(futures):
            index = futures[future]
            try:
                results[index] = future.result()
            except Exception as exc:
                errors[index] = exc

    if errors:
        raise errors[min(errors)]
    return results  # type: ignore[return-value]
