import asyncio
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable
from typing import Iterable
from typing import Optional

import tqdm

logger = logging.getLogger("additive_cs.util.workers")

WORKERS_ENV = "ADDITIVE_CS_WORKERS"


def default_workers() -> int:
    """Worker count from ADDITIVE_CS_WORKERS, falling back to the CPU count."""
    value = os.environ.get(WORKERS_ENV)
    if value:
        workers = int(value)
        if workers < 1:
            raise ValueError(f"{WORKERS_ENV} must be at least 1, got {workers}")
        return workers
    return os.cpu_count() or 1


async def run_jobs_async(job_fn: Callable, jobs: list, workers: int, desc: str = None) -> list:
    """Run job_fn over every job on a thread pool, tracking completions with a progress bar.

    :param job_fn: Function called once per job
    :param jobs: The job arguments
    :param workers: Thread pool size
    :param desc: Progress bar label
    :return: The job results, in job order
    """
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, job_fn, job) for job in jobs]
        [await f for f in tqdm.tqdm(asyncio.as_completed(futures), total=len(futures), desc=desc)]
    return [f.result() for f in futures]


def run_jobs(
    job_fn: Callable, jobs: Iterable, workers: Optional[int] = None, desc: str = None
) -> list:
    """Synchronous entry point for run_jobs_async(); results come back in job order either way."""
    jobs = list(jobs)
    if workers is None:
        workers = default_workers()
    logger.debug("Running %s jobs (%s) on %s workers", len(jobs), desc, workers)
    if workers <= 1 or len(jobs) <= 1:
        return [job_fn(job) for job in tqdm.tqdm(jobs, desc=desc)]
    return asyncio.run(run_jobs_async(job_fn, jobs, workers, desc))
