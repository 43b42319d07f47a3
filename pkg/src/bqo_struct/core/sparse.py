"""Sparse feature vectors over hashed indices."""

from typing import Iterable, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from typing_extensions import TypeAlias

ModelVector: TypeAlias = npt.NDArray[np.float64]


def zero_model(hash_bits: int) -> ModelVector:
    """Return an all-zero weight vector of length 2**hash_bits."""
    return np.zeros(1 << hash_bits, dtype=np.float64)


class SparseVec:
    """
    Immutable sparse vector with strictly increasing indices and no stored zeros.

    Build instances through ``from_pairs`` or ``from_arrays``; both merge duplicate
    indices by addition, which is how colliding hashed features combine.
    """

    __slots__ = ("indices", "values")

    def __init__(self, indices: npt.NDArray[np.int64], values: npt.NDArray[np.float64]):
        self.indices = indices
        self.values = values
        self.indices.flags.writeable = False
        self.values.flags.writeable = False

    @classmethod
    def empty(cls) -> "SparseVec":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.float64))

    @classmethod
    def from_arrays(cls, indices: Sequence[int], values: Sequence[float]) -> "SparseVec":
        """
        Normalize parallel index/value arrays into a SparseVec.

        Args:
            indices: Feature indices, any order, duplicates allowed
            values: Values aligned with indices

        Returns:
            SparseVec with duplicates summed and zeros dropped
        """
        idx = np.asarray(indices, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        if idx.shape != vals.shape:
            raise ValueError(f"Index/value length mismatch: {idx.shape} vs {vals.shape}")
        if idx.size == 0:
            return cls.empty()

        uniq, inverse = np.unique(idx, return_inverse=True)
        summed = np.zeros(uniq.size, dtype=np.float64)
        np.add.at(summed, inverse, vals)
        keep = summed != 0.0
        return cls(uniq[keep], summed[keep])

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, float]]) -> "SparseVec":
        pairs = list(pairs)
        return cls.from_arrays([i for i, _ in pairs], [v for _, v in pairs])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def pairs(self) -> List[Tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def sq_norm(self) -> float:
        return float(np.dot(self.values, self.values))

    def dot(self, dense: ModelVector) -> float:
        """Inner product with a dense vector."""
        return float(np.dot(self.values, dense[self.indices]))

    def dot_sparse(self, other: "SparseVec") -> float:
        common, left, right = np.intersect1d(
            self.indices, other.indices, assume_unique=True, return_indices=True
        )
        if common.size == 0:
            return 0.0
        return float(np.dot(self.values[left], other.values[right]))

    def add_into(self, dense: ModelVector, scale: float = 1.0) -> None:
        """In-place ``dense += scale * self``."""
        dense[self.indices] += scale * self.values

    def __sub__(self, other: "SparseVec") -> "SparseVec":
        return SparseVec.from_arrays(
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.values, -other.values]),
        )

    def __add__(self, other: "SparseVec") -> "SparseVec":
        return SparseVec.from_arrays(
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.values, other.values]),
        )

    def to_dense(self, size: int) -> ModelVector:
        out = np.zeros(size, dtype=np.float64)
        out[self.indices] = self.values
        return out

    def validate(self, size: int) -> None:
        """
        Check the representation invariants.

        Raises:
            ValueError: If indices are not strictly increasing, out of range, or a zero is stored
        """
        if self.nnz == 0:
            return
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("Indices must be strictly increasing")
        if self.indices[0] < 0 or self.indices[-1] >= size:
            raise ValueError(f"Indices must lie in [0, {size})")
        if np.any(self.values == 0.0):
            raise ValueError("Explicit zero values are not allowed")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseVec):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self) -> int:
        return hash((self.indices.tobytes(), self.values.tobytes()))

    def __repr__(self) -> str:
        return f"SparseVec({self.pairs()!r})"
