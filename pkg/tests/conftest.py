"""Pytest configuration and shared fixtures."""

import threading

import oracles
import pytest

from bqo_struct.comm.tcp import TcpCoordinator, join_cluster


def run_tcp(size, target, timeout=10.0):
    """Run ``target(cluster)`` on ``size`` TCP ranks in threads; return results in rank order."""
    coordinator = TcpCoordinator("127.0.0.1", 0, size, timeout)
    results = [None] * size
    errors = [None] * size

    def run(rank):
        try:
            if rank == 0:
                cluster = coordinator.accept()
            else:
                cluster = join_cluster("127.0.0.1", coordinator.port, rank, size, timeout)
            with cluster:
                results[rank] = target(cluster)
        except BaseException as e:
            errors[rank] = e

    threads = [threading.Thread(target=run, args=(rank,)) for rank in range(size)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    failures = [e for e in errors if e is not None]
    if failures:
        raise failures[0]
    return results


@pytest.fixture
def tcp_runner():
    """Runner executing a worker body on a loopback TCP cluster."""
    return run_tcp


@pytest.fixture
def bqo_log(monkeypatch):
    """Quiet logging for command-line runs."""
    monkeypatch.setenv("BQO_LOG", "error")


@pytest.fixture
def scalar_problem():
    """One-coordinate multiclass problem whose dual optimum is known in closed form."""
    return oracles.scalar_problem()
