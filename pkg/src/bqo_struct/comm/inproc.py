"""In-process cluster: K worker threads meeting at a shared rendezvous."""

import logging
import threading
from typing import Any, Callable, List, Optional, Tuple, TypeVar

import numpy as np
import numpy.typing as npt

from bqo_struct.comm.base import (
    Cluster,
    ScalarContribution,
    VectorContribution,
    reduce_scalars,
    sum_vectors,
)
from bqo_struct.core.exceptions import CollectiveError

logger = logging.getLogger(__name__)

T = TypeVar("T")


class InProcessGroup:
    """
    Rendezvous shared by the K handles of one in-process cluster.

    Each collective writes its contribution into the caller's slot and waits on a barrier whose
    action reduces all slots once the last worker arrives. A timeout or a failed reduction
    breaks the barrier, so every participant gets the error.
    """

    def __init__(self, size: int, timeout: float = 120.0):
        self.size = size
        self.timeout = timeout
        self._slots: List[Optional[Tuple[str, Any]]] = [None] * size
        self._result: Any = None
        self._error: Optional[str] = None
        self._barrier = threading.Barrier(size, action=self._reduce, timeout=timeout)

    def clusters(self) -> List["InProcessCluster"]:
        return [InProcessCluster(rank, self) for rank in range(self.size)]

    def _reduce(self) -> None:
        kinds = {slot[0] for slot in self._slots if slot is not None}
        if len(kinds) != 1:
            self._error = f"Mismatched collectives across ranks: {sorted(kinds)}"
            raise CollectiveError(self._error)
        kind = kinds.pop()
        payloads = [slot[1] for slot in self._slots if slot is not None]
        try:
            if kind == "vector":
                self._result = sum_vectors(payloads)
            elif kind == "scalars":
                self._result = reduce_scalars(payloads)
            else:
                self._result = None
        except CollectiveError as e:
            self._error = str(e)
            raise

    def exchange(self, rank: int, kind: str, payload: Any) -> Any:
        """Contribute to the current collective and return its reduced result."""
        self._slots[rank] = (kind, payload)
        try:
            self._barrier.wait()
        except CollectiveError:
            raise
        except threading.BrokenBarrierError as e:
            raise CollectiveError(
                self._error or f"Rank {rank}: collective timed out after {self.timeout}s"
            ) from e
        return self._result

    def abort(self, reason: str) -> None:
        """Fail the current and all later collectives on every rank."""
        if self._error is None:
            self._error = reason
        self._barrier.abort()


class InProcessCluster(Cluster):
    """Handle of one worker thread in an InProcessGroup."""

    transport = "inproc"

    def __init__(self, rank: int, group: InProcessGroup):
        super().__init__(rank, group.size, group.timeout)
        self.group = group

    def _exchange_vector(self, contribution: VectorContribution) -> npt.NDArray[np.float64]:
        result = self.group.exchange(self.rank, "vector", contribution)
        return np.array(result, dtype=np.float64, copy=True)

    def _exchange_scalars(self, contribution: ScalarContribution) -> npt.NDArray[np.float64]:
        result = self.group.exchange(self.rank, "scalars", contribution)
        return np.array(result, dtype=np.float64, copy=True)

    def _exchange_barrier(self) -> None:
        self.group.exchange(self.rank, "barrier", None)


def solo_cluster(timeout: float = 120.0) -> InProcessCluster:
    """Return a handle on a single-worker cluster."""
    return InProcessGroup(1, timeout).clusters()[0]


def spawn_inproc(
    size: int, target: Callable[[Cluster], T], timeout: float = 120.0
) -> List[T]:
    """
    Run ``target`` on K worker threads sharing one in-process cluster.

    Args:
        size: Number of workers K
        target: Worker body, called with that worker's cluster handle
        timeout: Collective timeout in seconds

    Returns:
        The workers' return values in rank order

    Raises:
        Exception: The first worker failure, preferring a root cause over the
            CollectiveErrors it triggered on the other ranks
    """
    group = InProcessGroup(size, timeout)
    results: List[Any] = [None] * size
    errors: List[Optional[BaseException]] = [None] * size

    def run(cluster: InProcessCluster) -> None:
        try:
            results[cluster.rank] = target(cluster)
        except BaseException as e:
            errors[cluster.rank] = e
            logger.debug("Rank %d failed: %s", cluster.rank, e)
            group.abort(f"Rank {cluster.rank} failed: {e}")

    threads = [
        threading.Thread(target=run, args=(cluster,), name=f"bqo-worker-{cluster.rank}")
        for cluster in group.clusters()
    ]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    failures = [e for e in errors if e is not None]
    if failures:
        root = next((e for e in failures if not isinstance(e, CollectiveError)), failures[0])
        raise root
    return results
