"""Within-stage fan-out over fixed-size chunks.

Chunk boundaries come from PARALLEL_CHUNK_SIZE only, and results are returned in
chunk order, so a stage produces the same numbers for any worker count.
"""

from __future__ import annotations

import logging
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import anyio
import anyio.to_thread

from app.core.config import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def chunk_ranges(n: int, size: Optional[int] = None) -> List[Tuple[int, int]]:
    size = size or get_settings().PARALLEL_CHUNK_SIZE
    return [(start, min(start + size, n)) for start in range(0, n, size)]


async def _gather(func: Callable[[T], R], items: Sequence[T], workers: int) -> List[R]:
    limiter = anyio.CapacityLimiter(workers)
    results: List[Optional[R]] = [None] * len(items)
    errors: List[Optional[BaseException]] = [None] * len(items)

    async def _one(i: int, item: T) -> None:
        try:
            results[i] = await anyio.to_thread.run_sync(func, item, limiter=limiter)
        except Exception as e:  # re-raised below in chunk order
            errors[i] = e

    async with anyio.create_task_group() as tg:
        for i, item in enumerate(items):
            tg.start_soon(_one, i, item)

    for e in errors:
        if e is not None:
            raise e
    return results  # type: ignore[return-value]


def map_chunks(func: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Apply func to every item, in threads when workers > 1, preserving order."""
    workers = workers or get_settings().WORKERS
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Fanning out {len(items)} chunks over {workers} workers")
    return anyio.run(_gather, func, items, workers)
