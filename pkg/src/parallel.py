"""Replica fan-out across processes with results kept in submission order."""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from src.config import WORKERS

logger = logging.getLogger(__name__)

Job = TypeVar("Job")
Result = TypeVar("Result")


def run_replicas(worker: Callable[[Job], Result], jobs: Iterable[Job], workers: Optional[int] = None) -> List[Result]:
    """Apply a module-level ``worker`` to every job.

    With one worker everything runs in-process. Results come back in job
    order regardless of the worker count, so reductions are deterministic.
    """
    jobs = list(jobs)
    workers = WORKERS if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    workers = min(workers, len(jobs))
    logger.info(f"Running {len(jobs)} replicas on {workers} processes")
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(worker, jobs))
