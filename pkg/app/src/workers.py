"""Worker-count detection and ordered parallel map for independent work units."""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import psutil

from .app_settings import NumericSettings, resolve_numerics

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class WorkerPool:
    """Run independent replication blocks, rows or fleet points on a thread pool."""

    @staticmethod
    def default_worker_count() -> int:
        """
        Physical core count, falling back to logical cores and then to 1.

        Returns:
            Number of worker threads to use when settings say 0
        """
        try:
            count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True)
        except (OSError, RuntimeError) as e:
            logger.debug(f"psutil could not report CPU count: {e}")
            count = None
        return max(1, int(count or 1))

    @staticmethod
    def resolve_worker_count(numerics: Optional[NumericSettings] = None, workers: Optional[int] = None) -> int:
        """Explicit count, else the settings value, else the physical core count."""
        if workers is None:
            workers = resolve_numerics(numerics).workers
        if workers and workers > 0:
            return int(workers)
        return WorkerPool.default_worker_count()

    @staticmethod
    def map_ordered(
        func: Callable[[T], R],
        items: Iterable[T],
        numerics: Optional[NumericSettings] = None,
        workers: Optional[int] = None,
    ) -> List[R]:
        """
        Apply func to every item, returning results in input order.

        The first exception raised by any unit propagates after the pool is
        shut down.
        """
        items = list(items)
        count = min(WorkerPool.resolve_worker_count(numerics, workers), max(1, len(items)))
        if count == 1 or len(items) <= 1:
            return [func(item) for item in items]
        logger.debug(f"Dispatching {len(items)} work units to {count} workers")
        with ThreadPoolExecutor(max_workers=count) as pool:
            return list(pool.map(func, items))

    @staticmethod
    async def map_ordered_async(
        func: Callable[[T], R],
        items: Iterable[T],
        numerics: Optional[NumericSettings] = None,
        workers: Optional[int] = None,
    ) -> List[R]:
        """Run map_ordered in an executor so the event loop is not blocked."""
        loop = asyncio.get_running_loop()
        items = list(items)
        return await loop.run_in_executor(None, lambda: WorkerPool.map_ordered(func, items, numerics, workers))
