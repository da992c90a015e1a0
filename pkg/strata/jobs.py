"""Thread-pool fan-out for independent per-stack work."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
import logging
from typing import Callable, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def fan_out(fn: Callable[[T], R], items: Sequence[T], max_workers: int = 1, label: str = 'job') -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    With one worker the items run inline. Otherwise failures are logged per
    item and the earliest failing item's exception is re-raised once every
    future has settled.
    """
    items = list(items)
    if not items:
        return []

    max_workers = max(1, int(max_workers or 1))
    if max_workers == 1 or len(items) == 1:
        return [fn(item) for item in items]

    max_workers = min(max_workers, len(items))
    results: list = [None] * len(items)
    failures: dict[int, Exception] = {}
    with ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix=label) as pool:
        future_to_index = {pool.submit(fn, item): index for index, item in enumerate(items)}
        for future in as_completed(future_to_index):
            index = future_to_index[future]
            try:
                results[index] = future.result()
            except Exception as e:
                logger.error("Error in %s item %d: %s", label, index, e)
                failures[index] = e

    if failures:
        raise failures[min(failures)]
    logger.debug("%s run complete. items=%d workers=%d", label, len(items), max_workers)
    return results
