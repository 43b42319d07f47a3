"""Multiclass classification as the simplest structured task."""

from typing import List, Tuple

import numpy as np
import numpy.typing as npt

from bqo_struct.core.dual import StructureKey
from bqo_struct.core.exceptions import StructureError
from bqo_struct.core.sparse import ModelVector, SparseVec
from bqo_struct.tasks.base import FeatureBag, StructuredTask, TaskInstance

_Table = Tuple[npt.NDArray[np.int64], npt.NDArray[np.float64]]


class MulticlassTask(StructuredTask):
    """
    Multiclass task with 0/1 loss.

    Phi(x, y) emits ("emit", "y:f") with value v for every input feature (f, v).
    """

    def _build_table(self, instance: TaskInstance) -> _Table:
        bag: FeatureBag = instance.observation
        index = np.array(
            [
                [self.emission_index(label, name) for name, _ in bag]
                for label in range(self.num_labels)
            ],
            dtype=np.int64,
        ).reshape(self.num_labels, len(bag))
        values = np.array([value for _, value in bag], dtype=np.float64)
        return index, values

    def _table(self, instance: TaskInstance) -> _Table:
        return self._cached(instance, self._build_table)

    def class_scores(self, w: ModelVector, instance: TaskInstance) -> npt.NDArray[np.float64]:
        """Return w'Phi(x, c) for every class c."""
        index, values = self._table(instance)
        if values.size == 0:
            return np.zeros(self.num_labels, dtype=np.float64)
        return (w[index] * values).sum(axis=1)  # type: ignore[no-any-return]

    def validate_structure(self, instance: TaskInstance, y: StructureKey) -> None:
        if not isinstance(y, (int, np.integer)) or isinstance(y, bool):
            raise StructureError(f"Multiclass structure must be a label id, got {y!r}")
        if not 0 <= int(y) < self.num_labels:
            raise StructureError(f"Label {y} outside [0, {self.num_labels})")

    def joint_features(self, instance: TaskInstance, y: StructureKey) -> SparseVec:
        self.validate_structure(instance, y)
        index, values = self._table(instance)
        return SparseVec.from_arrays(index[int(y)], values)  # type: ignore[arg-type]

    def loss(self, gold: StructureKey, y: StructureKey) -> float:
        if isinstance(gold, tuple) or isinstance(y, tuple):
            raise StructureError("Multiclass loss expects label ids")
        return 0.0 if gold == y else 1.0

    def loss_augmented_argmax(
        self, w: ModelVector, instance: TaskInstance
    ) -> Tuple[StructureKey, float]:
        scores = self.class_scores(w, instance)
        gold = int(instance.gold)  # type: ignore[arg-type]
        augmented = scores + 1.0
        augmented[gold] = scores[gold]
        best = int(np.argmax(augmented))
        if best == gold:
            return best, 0.0
        return best, max(0.0, float(augmented[best] - scores[gold]))

    def predict(self, w: ModelVector, instance: TaskInstance) -> StructureKey:
        return int(np.argmax(self.class_scores(w, instance)))

    def structure_count(self, instance: TaskInstance) -> int:
        return self.num_labels

    def _enumerate(self, instance: TaskInstance) -> List[StructureKey]:
        return list(range(self.num_labels))

    def score_prediction(self, gold: StructureKey, y: StructureKey) -> Tuple[int, int]:
        return (1 if gold == y else 0), 1
