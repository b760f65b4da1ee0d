from concurrent.futures import Executor, ProcessPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

import structlog

from engine.settings import get_settings

logger = structlog.get_logger()

A = TypeVar("A")
R = TypeVar("R")


def worker_count(jobs: Optional[int] = None) -> int:
    """--jobs wins over INLS_JOBS; never below one."""
    return max(1, jobs if jobs is not None else get_settings().jobs)


def make_executor(jobs: int) -> Executor:
    return ProcessPoolExecutor(max_workers=jobs)


def map_rows(fn: Callable[[A], R], items: Iterable[A], jobs: Optional[int] = None) -> list[R]:
    """
    Applies fn to every item, in order.

    A single worker runs in-process; more workers fan out over a process pool.
    """
    items = list(items)
    workers = min(worker_count(jobs), max(1, len(items)))
    logger.info("sweep.pool.start", rows=len(items), workers=workers)
    if workers == 1:
        return [fn(item) for item in items]
    with make_executor(workers) as pool:
        return list(pool.map(fn, items))
