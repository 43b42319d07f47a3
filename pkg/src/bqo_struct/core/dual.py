"""Dual state of the L2-loss structured SVM and its algebra.

The dual is ``f(alpha) = 1/2 alpha'(Q + A/2C) alpha - v'alpha`` over ``alpha >= 0``. Q, A and v
are never built: Q products go through the maintained ``w = sum alpha * phi``, A products
through the per-instance sums ``s_i``, and v is the cached loss of each entry.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
from typing_extensions import TypeAlias

from bqo_struct.core.exceptions import ConsistencyError, StructureError
from bqo_struct.core.schemas import TrainConfig
from bqo_struct.core.sparse import ModelVector, SparseVec, zero_model

if TYPE_CHECKING:
    from bqo_struct.tasks.base import StructuredTask, TaskInstance

StructureKey: TypeAlias = Union[int, Tuple[int, ...]]

ALPHA_SUM_RTOL = 1e-9


@dataclass
class WorkingSetEntry:
    """One dual variable alpha_{i,y} with the data of its row in Q and v."""

    structure_key: StructureKey
    phi: SparseVec
    delta: float
    alpha: float = 0.0
    phi_sq_norm: float = field(init=False)
    zero_streak: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.delta < 0:
            raise StructureError(f"Loss must be non-negative, got {self.delta}")
        if self.alpha < 0:
            raise StructureError(f"Alpha must be non-negative, got {self.alpha}")
        self.phi_sq_norm = self.phi.sq_norm()


@dataclass
class InstanceState:
    """Working set of one training instance and its alpha sum s_i."""

    instance_id: int
    gold: StructureKey
    entries: List[WorkingSetEntry] = field(default_factory=list)
    alpha_sum: float = 0.0
    _positions: Dict[StructureKey, int] = field(default_factory=dict, repr=False)

    def __contains__(self, key: StructureKey) -> bool:
        return key in self._positions

    def add(self, entry: WorkingSetEntry) -> bool:
        """Append an entry unless its structure is already present."""
        if entry.structure_key in self._positions:
            return False
        self._positions[entry.structure_key] = len(self.entries)
        self.entries.append(entry)
        self.alpha_sum += entry.alpha
        return True

    def prune(self, min_streak: int) -> int:
        """Drop entries whose alpha has been 0 for ``min_streak`` iterations."""
        kept = [e for e in self.entries if e.alpha > 0.0 or e.zero_streak < min_streak]
        removed = len(self.entries) - len(kept)
        if removed:
            self.entries = kept
            self._positions = {e.structure_key: pos for pos, e in enumerate(kept)}
        return removed

    def reconcile(self) -> None:
        """
        Recompute s_i from the entries.

        Raises:
            ConsistencyError: If the maintained sum drifted by more than 1e-9 relative
        """
        exact = float(sum(e.alpha for e in self.entries))
        scale = max(abs(exact), 1.0)
        if abs(exact - self.alpha_sum) > ALPHA_SUM_RTOL * scale:
            raise ConsistencyError(
                f"Instance {self.instance_id}: alpha sum {self.alpha_sum!r} drifted from {exact!r}"
            )
        self.alpha_sum = exact


@dataclass
class DualState:
    """One worker's slice of alpha: the working sets of its instances."""

    instances: List[InstanceState]
    config: TrainConfig

    @classmethod
    def for_shard(cls, shard: Sequence["TaskInstance"], config: TrainConfig) -> "DualState":
        return cls([InstanceState(inst.instance_id, inst.gold) for inst in shard], config)

    def entries(self) -> Iterator[Tuple[InstanceState, WorkingSetEntry]]:
        """Yield (instance, entry) in instance order, then entry order."""
        for inst in self.instances:
            for entry in inst.entries:
                yield inst, entry

    @property
    def size(self) -> int:
        return sum(len(inst.entries) for inst in self.instances)

    def local_terms(self) -> Tuple[float, float]:
        """Return (sum_i s_i^2, sum alpha * delta) in fixed summation order."""
        s_sq = 0.0
        alpha_delta = 0.0
        for inst in self.instances:
            s_sq += inst.alpha_sum * inst.alpha_sum
            for entry in inst.entries:
                alpha_delta += entry.alpha * entry.delta
        return s_sq, alpha_delta

    def local_w(self, hash_bits: int) -> ModelVector:
        """Return sum alpha * phi over this worker's entries."""
        w = zero_model(hash_bits)
        for _, entry in self.entries():
            if entry.alpha != 0.0:
                entry.phi.add_into(w, entry.alpha)
        return w

    def reconcile(self) -> None:
        for inst in self.instances:
            inst.reconcile()

    def min_alpha(self) -> float:
        return min((e.alpha for _, e in self.entries()), default=0.0)


def objective_from_terms(w: ModelVector, c: float, s_sq: float, alpha_delta: float) -> float:
    """Evaluate f(alpha) = 1/2 |w|^2 + (1/4C) sum s_i^2 - sum alpha * delta."""
    return 0.5 * float(np.dot(w, w)) + s_sq / (4.0 * c) - alpha_delta


def dual_objective(states: Sequence[DualState], w: ModelVector, c: float) -> float:
    """
    Evaluate the dual objective over all workers' states.

    Uses alpha'Q alpha = |w|^2 and alpha'A alpha = sum_i s_i^2, so ``w`` must be consistent
    with alpha. Summation runs by worker rank, then instance, then entry.

    Args:
        states: Dual states ordered by worker rank
        w: Weight vector consistent with alpha
        c: Regularization constant C

    Returns:
        f(alpha); 0 for an empty state with w = 0
    """
    s_sq = 0.0
    alpha_delta = 0.0
    for state in states:
        local_s_sq, local_alpha_delta = state.local_terms()
        s_sq += local_s_sq
        alpha_delta += local_alpha_delta
    return objective_from_terms(w, c, s_sq, alpha_delta)


def dual_gradient_entry(
    entry: WorkingSetEntry, s_i: float, w: ModelVector, c: float
) -> float:
    """Return the gradient coordinate w'phi + s_i/(2C) - delta of one dual variable."""
    return entry.phi.dot(w) + s_i / (2.0 * c) - entry.delta


def slack(w: ModelVector, task: "StructuredTask", instance: "TaskInstance") -> float:
    """Return xi_i = max(0, max_y [delta(y_i, y) - w'phi(y)]) by loss-augmented inference."""
    _, violation = task.loss_augmented_argmax(w, instance)
    return max(0.0, violation)


def squared_slack_sum(
    w: ModelVector, task: "StructuredTask", instances: Sequence["TaskInstance"]
) -> float:
    total = 0.0
    for instance in instances:
        xi = slack(w, task, instance)
        total += xi * xi
    return total


def primal_objective(
    w: ModelVector,
    instances: Sequence["TaskInstance"],
    task: "StructuredTask",
    c: float,
) -> float:
    """
    Evaluate the primal objective 1/2 |w|^2 + C sum_i xi_i^2.

    Args:
        w: Weight vector
        instances: All training instances
        task: Task providing exact loss-augmented inference
        c: Regularization constant C

    Returns:
        Primal objective value
    """
    return 0.5 * float(np.dot(w, w)) + c * squared_slack_sum(w, task, instances)


def reconstruct_w(states: Sequence[DualState], hash_bits: int) -> ModelVector:
    """Rebuild w = sum alpha * phi from scratch over all workers; for audits only."""
    w = zero_model(hash_bits)
    for state in states:
        w += state.local_w(hash_bits)
    return w


def check_consistency(
    w: ModelVector, reference: ModelVector, tolerance: float = 1e-6
) -> None:
    """
    Compare the maintained w with a reconstruction.

    Raises:
        ConsistencyError: If the max-norm difference exceeds ``tolerance``
    """
    gap = float(np.max(np.abs(w - reference))) if w.size else 0.0
    if gap > tolerance:
        raise ConsistencyError(f"Maintained w differs from sum(alpha * phi) by {gap:.3e}")
