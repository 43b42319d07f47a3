"""First-order linear-chain sequence labeling with Hamming loss."""

import itertools
from typing import List, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from bqo_struct.core.dual import StructureKey
from bqo_struct.core.exceptions import StructureError
from bqo_struct.core.hashing import hash_parts
from bqo_struct.core.sparse import ModelVector, SparseVec
from bqo_struct.tasks.base import FeatureBag, StructuredTask, TaskInstance

_Token = Tuple[npt.NDArray[np.int64], npt.NDArray[np.float64]]


class ChainTask(StructuredTask):
    """
    Linear-chain tagging task.

    Phi(x, y) emits ("emit", "y_t:f") for every feature f of token t and ("trans", "a:b") with
    value 1 for every adjacent label pair. The loss is the unnormalized Hamming distance, which
    decomposes per position, so loss-augmented inference stays a first-order Viterbi problem.
    """

    def __init__(self, num_labels: int, hash_bits: int):
        super().__init__(num_labels, hash_bits)
        self.transition_index = np.array(
            [
                [hash_parts("trans", f"{a}:{b}", hash_bits) for b in range(num_labels)]
                for a in range(num_labels)
            ],
            dtype=np.int64,
        )

    def _build_table(self, instance: TaskInstance) -> List[_Token]:
        tokens: Sequence[FeatureBag] = instance.observation
        table = []
        for bag in tokens:
            index = np.array(
                [
                    [self.emission_index(label, name) for name, _ in bag]
                    for label in range(self.num_labels)
                ],
                dtype=np.int64,
            ).reshape(self.num_labels, len(bag))
            values = np.array([value for _, value in bag], dtype=np.float64)
            table.append((index, values))
        return table

    def _table(self, instance: TaskInstance) -> List[_Token]:
        return self._cached(instance, self._build_table)

    def node_scores(self, w: ModelVector, instance: TaskInstance) -> npt.NDArray[np.float64]:
        """Return the (length, labels) matrix of emission scores."""
        table = self._table(instance)
        node = np.zeros((len(table), self.num_labels), dtype=np.float64)
        for t, (index, values) in enumerate(table):
            if values.size:
                node[t] = (w[index] * values).sum(axis=1)
        return node

    @staticmethod
    def path_score(
        node: npt.NDArray[np.float64], trans: npt.NDArray[np.float64], y: Sequence[int]
    ) -> float:
        score = 0.0
        for t, label in enumerate(y):
            score += float(node[t, label])
            if t > 0:
                score += float(trans[y[t - 1], label])
        return score

    def viterbi(
        self, node: npt.NDArray[np.float64], trans: npt.NDArray[np.float64]
    ) -> Tuple[int, ...]:
        """
        Return the best label sequence for given node and edge scores.

        The table is filled from the last position backwards and decoded forwards, taking the
        smallest label among equal scores, so ties resolve to the lexicographically smallest
        sequence.
        """
        length = node.shape[0]
        if length == 0:
            return ()
        beta = np.empty_like(node)
        beta[-1] = node[-1]
        for t in range(length - 2, -1, -1):
            beta[t] = node[t] + np.max(trans + beta[t + 1][np.newaxis, :], axis=1)

        path = [int(np.argmax(beta[0]))]
        for t in range(1, length):
            path.append(int(np.argmax(trans[path[-1]] + beta[t])))
        return tuple(path)

    def validate_structure(self, instance: TaskInstance, y: StructureKey) -> None:
        if not isinstance(y, tuple):
            raise StructureError(f"Chain structure must be a tuple of label ids, got {y!r}")
        length = len(instance.observation)
        if len(y) != length:
            raise StructureError(f"Structure length {len(y)} does not match input length {length}")
        for label in y:
            if not 0 <= label < self.num_labels:
                raise StructureError(f"Label {label} outside [0, {self.num_labels})")

    def joint_features(self, instance: TaskInstance, y: StructureKey) -> SparseVec:
        self.validate_structure(instance, y)
        labels: Tuple[int, ...] = y  # type: ignore[assignment]
        table = self._table(instance)
        indices = [index[label] for (index, _), label in zip(table, labels)]
        values = [vals for _, vals in table]
        if len(labels) > 1:
            indices.append(self.transition_index[list(labels[:-1]), list(labels[1:])])
            values.append(np.ones(len(labels) - 1, dtype=np.float64))
        if not indices:
            return SparseVec.empty()
        return SparseVec.from_arrays(np.concatenate(indices), np.concatenate(values))

    def loss(self, gold: StructureKey, y: StructureKey) -> float:
        if not isinstance(gold, tuple) or not isinstance(y, tuple):
            raise StructureError("Chain loss expects label sequences")
        if len(gold) != len(y):
            raise StructureError(f"Length mismatch: {len(gold)} vs {len(y)}")
        return float(sum(1 for a, b in zip(gold, y) if a != b))

    def loss_augmented_argmax(
        self, w: ModelVector, instance: TaskInstance
    ) -> Tuple[StructureKey, float]:
        gold: Tuple[int, ...] = instance.gold  # type: ignore[assignment]
        node = self.node_scores(w, instance)
        trans = w[self.transition_index]
        positions = np.arange(len(gold))
        augmented = node + 1.0
        augmented[positions, list(gold)] = node[positions, list(gold)]

        best = self.viterbi(augmented, trans)
        if best == gold:
            return best, 0.0
        violation = self.path_score(augmented, trans, best) - self.path_score(node, trans, gold)
        return best, max(0.0, violation)

    def predict(self, w: ModelVector, instance: TaskInstance) -> StructureKey:
        return self.viterbi(self.node_scores(w, instance), w[self.transition_index])

    def structure_count(self, instance: TaskInstance) -> int:
        return int(self.num_labels ** len(instance.observation))

    def _enumerate(self, instance: TaskInstance) -> List[StructureKey]:
        length = len(instance.observation)
        return list(itertools.product(range(self.num_labels), repeat=length))

    def score_prediction(self, gold: StructureKey, y: StructureKey) -> Tuple[int, int]:
        gold_seq: Tuple[int, ...] = gold  # type: ignore[assignment]
        pred_seq: Tuple[int, ...] = y  # type: ignore[assignment]
        return sum(1 for a, b in zip(gold_seq, pred_seq) if a == b), len(gold_seq)
