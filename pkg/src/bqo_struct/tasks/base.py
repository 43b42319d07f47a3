"""Task-agnostic structured prediction contract."""

import weakref
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Sequence, Tuple, TypeVar

from typing_extensions import TypeAlias

from bqo_struct.core.dual import StructureKey, WorkingSetEntry
from bqo_struct.core.exceptions import EnumerationLimitError
from bqo_struct.core.hashing import hash_parts
from bqo_struct.core.sparse import ModelVector, SparseVec

FeatureBag: TypeAlias = Tuple[Tuple[str, float], ...]

MAX_ENUMERATION = 100_000

T = TypeVar("T")


@dataclass(frozen=True)
class TaskInstance:
    """
    One training or test pair (x_i, y_i).

    Attributes:
        instance_id: Position of the instance in its corpus
        observation: A FeatureBag (multiclass) or a tuple of FeatureBags, one per token (chain)
        gold: Annotated structure
    """

    instance_id: int
    observation: Any
    gold: StructureKey


def _evicter(
    tables: Dict[int, Tuple["weakref.ref[TaskInstance]", Any]], key: int
) -> Callable[["weakref.ref[TaskInstance]"], None]:
    def evict(ref: "weakref.ref[TaskInstance]") -> None:
        entry = tables.get(key)
        if entry is not None and entry[0] is ref:
            tables.pop(key, None)

    return evict


class StructuredTask:
    """
    Base class of structured tasks.

    Subclasses define the joint feature map, the structured loss and exact (loss-augmented)
    inference; this class derives phi, working-set entries and accuracy from them.
    """

    def __init__(self, num_labels: int, hash_bits: int):
        """
        Initialize the task.

        Args:
            num_labels: Size of the label set
            hash_bits: Feature indices lie in [0, 2**hash_bits)
        """
        if num_labels < 1:
            raise ValueError("A task needs at least one label")
        self.num_labels = num_labels
        self.hash_bits = hash_bits
        self._tables: Dict[int, Tuple["weakref.ref[TaskInstance]", Any]] = {}

    def emission_index(self, label: int, feature: str) -> int:
        return hash_parts("emit", f"{label}:{feature}", self.hash_bits)

    def _cached(self, instance: TaskInstance, build: Callable[[TaskInstance], T]) -> T:
        # keyed by identity; an entry lives only as long as its instance
        key = id(instance)
        hit = self._tables.get(key)
        if hit is not None and hit[0]() is instance:
            return hit[1]  # type: ignore[no-any-return]
        table = build(instance)
        self._tables[key] = (weakref.ref(instance, _evicter(self._tables, key)), table)
        return table

    def validate_structure(self, instance: TaskInstance, y: StructureKey) -> None:
        """
        Check that y is feasible for the instance.

        Raises:
            StructureError: If y is not a feasible structure
        """
        raise NotImplementedError("Subclass must implement validate_structure")

    def joint_features(self, instance: TaskInstance, y: StructureKey) -> SparseVec:
        """Return Phi(x, y)."""
        raise NotImplementedError("Subclass must implement joint_features")

    def loss(self, gold: StructureKey, y: StructureKey) -> float:
        """Return delta(gold, y)."""
        raise NotImplementedError("Subclass must implement loss")

    def loss_augmented_argmax(
        self, w: ModelVector, instance: TaskInstance
    ) -> Tuple[StructureKey, float]:
        """
        Find the most violated structure argmax_y [w'Phi(x, y) + delta(gold, y)].

        Returns:
            Tuple of (structure, violation) where violation = delta - w'phi >= 0
        """
        raise NotImplementedError("Subclass must implement loss_augmented_argmax")

    def predict(self, w: ModelVector, instance: TaskInstance) -> StructureKey:
        """Return argmax_y w'Phi(x, y)."""
        raise NotImplementedError("Subclass must implement predict")

    def structure_count(self, instance: TaskInstance) -> int:
        raise NotImplementedError("Subclass must implement structure_count")

    def _enumerate(self, instance: TaskInstance) -> List[StructureKey]:
        raise NotImplementedError("Subclass must implement _enumerate")

    def enumerate_structures(self, instance: TaskInstance) -> List[StructureKey]:
        """
        List every feasible structure in a deterministic order.

        Raises:
            EnumerationLimitError: If there are more than 100,000 structures
        """
        count = self.structure_count(instance)
        if count > MAX_ENUMERATION:
            raise EnumerationLimitError(
                f"Instance {instance.instance_id} has {count} structures "
                f"(limit {MAX_ENUMERATION})"
            )
        return self._enumerate(instance)

    def score_prediction(self, gold: StructureKey, y: StructureKey) -> Tuple[int, int]:
        """Return (correct units, total units) used for accuracy."""
        raise NotImplementedError("Subclass must implement score_prediction")

    def phi_diff(self, instance: TaskInstance, y: StructureKey) -> SparseVec:
        """Return phi(y, y_i, x_i) = Phi(x_i, y_i) - Phi(x_i, y)."""
        if y == instance.gold:
            self.validate_structure(instance, y)
            return SparseVec.empty()
        return self.joint_features(instance, instance.gold) - self.joint_features(instance, y)

    def make_entry(self, instance: TaskInstance, y: StructureKey) -> WorkingSetEntry:
        """Build a zero-alpha working-set entry for structure y."""
        return WorkingSetEntry(
            structure_key=y,
            phi=self.phi_diff(instance, y),
            delta=self.loss(instance.gold, y),
        )

    def accuracy(self, w: ModelVector, instances: Sequence[TaskInstance]) -> float:
        """Return the fraction of correct units (labels or tokens); 0 for no units."""
        correct, total = self.accuracy_counts(w, instances)
        return correct / total if total else 0.0

    def accuracy_counts(
        self, w: ModelVector, instances: Sequence[TaskInstance]
    ) -> Tuple[int, int]:
        correct = 0
        total = 0
        for instance in instances:
            good, units = self.score_prediction(instance.gold, self.predict(w, instance))
            correct += good
            total += units
        return correct, total
