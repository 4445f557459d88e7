#!/usr/bin/env python3
"""
Tests for SweepJobManager: ordering, failure capture and status tracking.
"""

import os
import random
import sys
import time

import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from error_handler import AccuracyError
from job_manager import JobStatus, SweepJobManager


def test_results_in_input_order():
    """Results come back in input order whatever the completion order"""
    print("\n" + "=" * 60)
    print("TEST: Result ordering")
    print("=" * 60)

    rng = random.Random(1)
    delays = [rng.uniform(0.0, 0.02) for _ in range(25)]

    def slow_square(i):
        time.sleep(delays[i])
        return i * i

    manager = SweepJobManager(max_workers=6)
    results = manager.run("ordering", slow_square, list(range(25)))
    assert [r.index for r in results] == list(range(25))
    assert [r.value for r in results] == [i * i for i in range(25)]
    assert all(r.success for r in results)
    print("✓ 25 results returned in order")


def test_failures_are_recorded_and_job_continues():
    def evaluate(x):
        if x == 3:
            raise AccuracyError("did not converge", best_estimate=1.0)
        if x == 5:
            raise ValueError("unexpected")
        return x + 1

    manager = SweepJobManager(max_workers=3)
    job_id = manager.create_job("failures", list(range(8)))
    results = manager.run_job(job_id, evaluate, list(range(8)))

    assert len(results) == 8
    assert not results[3].success
    assert results[3].error_type == 'AccuracyError'
    assert not results[5].success
    assert results[5].error_type == 'ValueError'
    assert [r.value for r in results if r.success] == [1, 2, 3, 5, 7, 8]

    status = manager.get_job_status(job_id)
    assert status['status'] == JobStatus.COMPLETED.value
    assert status['processed_items'] == 8
    assert status['failed_items'] == 2
    print("✓ Failed points recorded, remaining points still ran")


def test_job_cannot_run_twice():
    manager = SweepJobManager(max_workers=1)
    job_id = manager.create_job("once", [1])
    manager.run_job(job_id, lambda x: x, [1])
    with pytest.raises(RuntimeError):
        manager.run_job(job_id, lambda x: x, [1])
    with pytest.raises(RuntimeError):
        manager.run_job("missing", lambda x: x, [1])
    assert manager.get_job_status("missing") is None


def test_worker_count_from_environment(monkeypatch):
    monkeypatch.setenv('CAVICRYS_THREADS', '3')
    assert SweepJobManager().max_workers == 3
    assert SweepJobManager(max_workers=0).max_workers == 1


def test_empty_job():
    manager = SweepJobManager(max_workers=2)
    assert manager.run("empty", lambda x: x, []) == []


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
