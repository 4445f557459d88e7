"""
Job manager for parallel sweep-point evaluation.
Runs independent grid points on a thread pool with status tracking and
returns their results in grid order regardless of completion order.
"""
import time
import uuid
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

from config import get_max_workers
from error_handler import (
    CavicrysError, setup_debug_logging, log_debug, log_error_with_context,
    log_function_entry, log_function_exit,
)

# Setup debug logging
setup_debug_logging()
log_debug("job_manager module initialized")


class JobStatus(Enum):
    """Job execution status"""
    QUEUED = "queued"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class PointResult:
    """Result of evaluating a single sweep point"""
    index: int
    item: Any
    success: bool
    value: Any = None
    error: Optional[str] = None
    error_type: Optional[str] = None


@dataclass
class Job:
    """A batch of sweep points"""
    job_id: str
    label: str
    status: JobStatus
    total_items: int
    processed_items: int = 0
    failed_items: int = 0
    results: List[PointResult] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    started_at: Optional[float] = None
    completed_at: Optional[float] = None


class SweepJobManager:
    """
    Evaluates sweep points concurrently.

    A failing point is recorded as a failed PointResult and the remaining
    points still run. Numerical work is deterministic per point, so the
    results do not depend on scheduling.
    """

    def __init__(self, max_workers: Optional[int] = None):
        """
        Initialize job manager.

        Args:
            max_workers: Maximum number of concurrent workers (default from CAVICRYS_THREADS)
        """
        self.max_workers = max_workers if max_workers is not None else get_max_workers()
        if self.max_workers < 1:
            self.max_workers = 1
        self.jobs: Dict[str, Job] = {}
        log_debug("SweepJobManager initialized", max_workers=self.max_workers)

    def create_job(self, label: str, items: Sequence[Any]) -> str:
        """
        Create a new job.

        Args:
            label: Short description used in log lines
            items: Items to process

        Returns:
            Job ID
        """
        job_id = str(uuid.uuid4())
        self.jobs[job_id] = Job(job_id=job_id, label=label, status=JobStatus.QUEUED,
                                total_items=len(items))
        logging.info(f"[JOB {job_id[:8]}] Created {label} job with {len(items)} points (queued)")
        return job_id

    def run_job(self, job_id: str, process_func: Callable[[Any], Any],
                items: Sequence[Any]) -> List[PointResult]:
        """
        Process every item and return the results in input order.

        Args:
            job_id: Job ID from create_job
            process_func: Function evaluating one item
            items: Items to process

        Raises:
            RuntimeError: If the job is unknown or not queued
        """
        log_function_entry("run_job", job_id=job_id, items_count=len(items))
        job = self.jobs.get(job_id)
        if job is None:
            raise RuntimeError(f"Cannot start job {job_id} - not found")
        if job.status != JobStatus.QUEUED:
            raise RuntimeError(f"Cannot start job {job_id} - already {job.status.value} (not queued)")

        job.status = JobStatus.PROCESSING
        job.started_at = time.time()
        results: List[Optional[PointResult]] = [None] * len(items)
        workers = min(self.max_workers, max(len(items), 1))

        try:
            with ThreadPoolExecutor(max_workers=workers,
                                    thread_name_prefix=f"job-{job_id[:8]}") as executor:
                futures = {
                    executor.submit(process_func, item): (index, item)
                    for index, item in enumerate(items)
                }
                for future in as_completed(futures):
                    index, item = futures[future]
                    try:
                        results[index] = PointResult(index, item, True, value=future.result())
                    except CavicrysError as e:
                        # Expected numerical failures: record and continue
                        logging.warning(f"[JOB {job_id[:8]}] Point {index} ({item}) failed: {e}")
                        results[index] = PointResult(index, item, False, error=str(e),
                                                     error_type=type(e).__name__)
                        job.failed_items += 1
                    except Exception as e:
                        log_error_with_context(
                            e,
                            context=f"Evaluating point {index} of {job.label} job {job_id}",
                            additional_info={"job_id": job_id, "item": item},
                        )
                        results[index] = PointResult(index, item, False, error=str(e),
                                                     error_type=type(e).__name__)
                        job.failed_items += 1
                    job.processed_items += 1

                    if job.processed_items % 10 == 0 or job.processed_items == len(items):
                        logging.info(f"[JOB {job_id[:8]}] Progress: {job.processed_items}/{len(items)} "
                                     f"points ({job.failed_items} failed)")
        except Exception as e:
            job.status = JobStatus.FAILED
            job.completed_at = time.time()
            log_error_with_context(e, context=f"Fatal error during {job.label} job {job_id}")
            raise

        job.results = [r for r in results if r is not None]
        job.status = JobStatus.COMPLETED
        job.completed_at = time.time()
        logging.info(f"[JOB {job_id[:8]}] Completed {job.label}: "
                     f"{job.processed_items - job.failed_items} succeeded, {job.failed_items} failed "
                     f"in {job.completed_at - job.started_at:.2f}s")
        log_function_exit("run_job", result=job.status.value)
        return job.results

    def run(self, label: str, process_func: Callable[[Any], Any],
            items: Sequence[Any]) -> List[PointResult]:
        """Create and run a job in one call."""
        return self.run_job(self.create_job(label, items), process_func, items)

    def get_job_status(self, job_id: str) -> Optional[Dict[str, Any]]:
        """
        Get job status.

        Returns:
            Job status dictionary or None if not found
        """
        job = self.jobs.get(job_id)
        if job is None:
            logging.warning(f"[JOB {job_id}] Status check failed - job not found")
            return None
        return {
            'job_id': job.job_id,
            'label': job.label,
            'status': job.status.value,
            'total_items': job.total_items,
            'processed_items': job.processed_items,
            'failed_items': job.failed_items,
        }
