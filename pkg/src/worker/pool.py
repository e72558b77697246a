"""
Process pool for CPU-bound fan-out (clip rendering, flow estimation).

Jobs must be pure, top-level functions of picklable arguments; results come back in input
order so parallel runs produce the same outputs as sequential ones.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

import structlog

from src.common.config import resolve_workers
from src.common.errors import format_error

logger = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], workers: int | None = None, label: str = "jobs"
) -> list[R]:
    """
    Apply ``fn`` to every item, in worker processes when more than one worker is available.

    Args:
        fn: Pure top-level function
        items: Job arguments
        workers: Worker count (None or 0 = available CPUs)
        label: Name used in log events

    Returns:
        list: Results in input order

    Raises:
        Exception: The first job failure, re-raised after logging
    """
    items = list(items)
    count = min(resolve_workers(workers), max(len(items), 1))
    logger.info("Starting batch", label=label, jobs=len(items), workers=count)

    try:
        if count <= 1:
            results = [fn(item) for item in items]
        else:
            chunksize = max(1, len(items) // (count * 4))
            pool = ProcessPoolExecutor(max_workers=count)
            try:
                results = list(pool.map(fn, items, chunksize=chunksize))
            except KeyboardInterrupt:
                logger.info("Received keyboard interrupt, cancelling pending jobs", label=label)
                pool.shutdown(wait=False, cancel_futures=True)
                raise
            finally:
                pool.shutdown(wait=True)
    except KeyboardInterrupt:
        raise
    except Exception as e:
        logger.error("Batch failed", label=label, error=format_error(e, "Job error"))
        raise

    logger.info("Batch completed", label=label, jobs=len(results))
    return results
