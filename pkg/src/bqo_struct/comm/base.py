"""Transport-agnostic collective operations.

Every backend funnels its collectives through ``sum_vectors`` and ``reduce_scalars``, which
reduce contributions strictly in rank order. That shared code is what makes the in-process
and TCP backends produce bit-identical results.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
import numpy.typing as npt
from typing_extensions import Literal

from bqo_struct.core.exceptions import CollectiveError

ReduceMode = Literal["sum", "min", "max"]
MODE_CODES = {"sum": 0, "min": 1, "max": 2}
MODE_NAMES = {code: name for name, code in MODE_CODES.items()}
MAX_SCALARS = 8
SPARSE_DENSITY = 0.25


@dataclass(frozen=True)
class VectorContribution:
    """
    One worker's input to a vector allreduce, dense or sparse.

    Attributes:
        rank: Contributing worker
        length: Dense length of the vector
        dense: Full vector, or None when sparse
        indices: Nonzero positions when sparse
        values: Nonzero values when sparse
    """

    rank: int
    length: int
    dense: Optional[npt.NDArray[np.float64]] = None
    indices: Optional[npt.NDArray[np.int64]] = None
    values: Optional[npt.NDArray[np.float64]] = None

    @classmethod
    def of(cls, rank: int, vec: npt.NDArray[np.float64]) -> "VectorContribution":
        """Wrap a dense vector, switching to sparse form below 25% density."""
        nonzero = np.flatnonzero(vec)
        if nonzero.size < SPARSE_DENSITY * vec.size:
            return cls(rank, int(vec.size), indices=nonzero.astype(np.int64), values=vec[nonzero])
        return cls(rank, int(vec.size), dense=vec)

    @property
    def is_sparse(self) -> bool:
        return self.dense is None

    def add_into(self, acc: npt.NDArray[np.float64]) -> None:
        if self.dense is not None:
            acc += self.dense
        else:
            acc[self.indices] += self.values


@dataclass(frozen=True)
class ScalarContribution:
    """One worker's input to a scalar allreduce with per-field reduction modes."""

    rank: int
    values: npt.NDArray[np.float64]
    modes: Sequence[ReduceMode]


def sum_vectors(contributions: Sequence[VectorContribution]) -> npt.NDArray[np.float64]:
    """
    Sum vector contributions in rank order.

    Args:
        contributions: One contribution per rank, any order

    Returns:
        Elementwise sum accumulated as ((0 + v_0) + v_1) + ...

    Raises:
        CollectiveError: If lengths differ
    """
    ordered = sorted(contributions, key=lambda c: c.rank)
    lengths = {c.length for c in ordered}
    if len(lengths) > 1:
        raise CollectiveError(f"Vector length mismatch across ranks: {sorted(lengths)}")
    acc = np.zeros(ordered[0].length if ordered else 0, dtype=np.float64)
    for contribution in ordered:
        contribution.add_into(acc)
    return acc


def reduce_scalars(contributions: Sequence[ScalarContribution]) -> npt.NDArray[np.float64]:
    """
    Reduce scalar arrays field by field in rank order.

    Raises:
        CollectiveError: If lengths or reduction modes differ across ranks
    """
    ordered = sorted(contributions, key=lambda c: c.rank)
    if not ordered:
        return np.zeros(0, dtype=np.float64)
    modes = list(ordered[0].modes)
    for contribution in ordered:
        if len(contribution.values) != len(modes):
            raise CollectiveError("Scalar count mismatch across ranks")
        if list(contribution.modes) != modes:
            raise CollectiveError("Scalar reduction modes differ across ranks")

    out = np.empty(len(modes), dtype=np.float64)
    for field, mode in enumerate(modes):
        if mode == "sum":
            acc = 0.0
            for contribution in ordered:
                acc += float(contribution.values[field])
        elif mode == "min":
            acc = float("inf")
            for contribution in ordered:
                acc = min(acc, float(contribution.values[field]))
        else:
            acc = float("-inf")
            for contribution in ordered:
                acc = max(acc, float(contribution.values[field]))
        out[field] = acc
    return out


class Cluster:
    """
    Base class of a worker's handle on a K-worker cluster.

    Collectives block until every worker has called them. Subclasses implement the
    ``_exchange_*`` hooks; reductions themselves always run through the shared functions above.
    """

    transport = "abstract"

    def __init__(self, rank: int, size: int, timeout: float = 120.0):
        """
        Initialize the handle.

        Args:
            rank: This worker's rank in [0, size)
            size: Number of workers K
            timeout: Seconds a collective may wait for the other workers
        """
        if size < 1:
            raise CollectiveError(f"Cluster size must be positive, got {size}")
        if not 0 <= rank < size:
            raise CollectiveError(f"Rank {rank} outside [0, {size})")
        self.rank = rank
        self.size = size
        self.timeout = timeout
        self._busy = threading.Lock()

    @contextmanager
    def _collective(self) -> Iterator[None]:
        if not self._busy.acquire(blocking=False):
            raise CollectiveError(f"Rank {self.rank}: another collective is already in progress")
        try:
            yield
        finally:
            self._busy.release()

    def allreduce_sum_vec(self, vec: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
        """
        Sum a dense vector across all workers.

        Args:
            vec: This worker's 1-D float64 vector; every worker passes the same length

        Returns:
            The rank-ordered elementwise sum, identical on every worker

        Raises:
            CollectiveError: On length mismatch, timeout or disconnect
        """
        vec = np.ascontiguousarray(vec, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError("allreduce_sum_vec expects a 1-D vector")
        contribution = VectorContribution.of(self.rank, vec)
        with self._collective():
            if self.size == 1:
                return sum_vectors([contribution])
            return self._exchange_vector(contribution)

    def allreduce_scalars(
        self, values: Sequence[float], modes: Optional[Sequence[ReduceMode]] = None
    ) -> npt.NDArray[np.float64]:
        """
        Reduce up to 8 scalars across all workers.

        Args:
            values: This worker's scalars
            modes: Per-field reduction, "sum" (default), "min" or "max"

        Returns:
            Reduced scalars, identical on every worker

        Raises:
            ValueError: If more than 8 scalars are given or modes do not align
            CollectiveError: On mismatch, timeout or disconnect
        """
        array = np.asarray(values, dtype=np.float64).reshape(-1)
        if array.size > MAX_SCALARS:
            raise ValueError(f"At most {MAX_SCALARS} scalars per collective, got {array.size}")
        field_modes = list(modes) if modes is not None else ["sum"] * array.size
        if len(field_modes) != array.size:
            raise ValueError("One reduction mode per scalar is required")
        for mode in field_modes:
            if mode not in MODE_CODES:
                raise ValueError(f"Unknown reduction mode: {mode}")
        contribution = ScalarContribution(self.rank, array, field_modes)  # type: ignore[arg-type]
        with self._collective():
            if self.size == 1:
                return reduce_scalars([contribution])
            return self._exchange_scalars(contribution)

    def allreduce_sum_scalars(self, values: Sequence[float]) -> npt.NDArray[np.float64]:
        """Sum up to 8 scalars across all workers in rank order."""
        return self.allreduce_scalars(values)

    def barrier(self) -> None:
        """Block until every worker has arrived."""
        with self._collective():
            if self.size > 1:
                self._exchange_barrier()

    def close(self) -> None:
        """Release transport resources."""

    def _exchange_vector(self, contribution: VectorContribution) -> npt.NDArray[np.float64]:
        raise NotImplementedError("Subclass must implement _exchange_vector")

    def _exchange_scalars(self, contribution: ScalarContribution) -> npt.NDArray[np.float64]:
        raise NotImplementedError("Subclass must implement _exchange_scalars")

    def _exchange_barrier(self) -> None:
        raise NotImplementedError("Subclass must implement _exchange_barrier")

    def __enter__(self) -> "Cluster":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
