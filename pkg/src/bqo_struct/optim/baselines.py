"""Comparison methods: distributed structured perceptron and simple model averaging."""

import logging
import time
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from bqo_struct.comm.base import Cluster
from bqo_struct.comm.inproc import solo_cluster
from bqo_struct.core.schemas import PerceptronConfig, TrainConfig
from bqo_struct.core.sparse import ModelVector, zero_model
from bqo_struct.optim.driver import train_worker
from bqo_struct.tasks.base import StructuredTask, TaskInstance

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9


class RoundStats(NamedTuple):
    round: int
    mistakes: int
    wall_time_s: float
    time_learning_s: float
    time_comm_s: float


RoundCallback = Callable[[RoundStats, ModelVector], None]


def perceptron_local_pass(
    w: ModelVector,
    shard: Sequence[TaskInstance],
    task: StructuredTask,
    averaged: bool = False,
) -> Tuple[ModelVector, int]:
    """
    Run one structured perceptron pass over a shard in its fixed order.

    On a mistake y_hat != y_i the update is w += Phi(x_i, y_i) - Phi(x_i, y_hat).

    Args:
        w: Starting weights; not modified
        shard: Instances in pass order
        task: Structured task
        averaged: Return the mean of the weights after every instance instead of the last ones

    Returns:
        Tuple of (updated weights, number of mistakes)
    """
    w = np.array(w, dtype=np.float64, copy=True)
    # sum over updates of (step - 1) * update, for the averaged weights
    lag = np.zeros_like(w) if averaged else None
    mistakes = 0
    for step, instance in enumerate(shard):
        y_hat = task.predict(w, instance)
        if y_hat == instance.gold:
            continue
        mistakes += 1
        update = task.phi_diff(instance, y_hat)
        update.add_into(w)
        if lag is not None:
            update.add_into(lag, float(step))
    if lag is not None and shard:
        w -= lag / len(shard)
    return w, mistakes


def mix_parameters(models: Sequence[ModelVector], weights: Sequence[float]) -> ModelVector:
    """
    Return the weighted sum of models.

    Raises:
        ValueError: On an empty list, mismatched lengths or weights not summing to 1
    """
    if not models:
        raise ValueError("At least one model is required")
    if len(weights) != len(models):
        raise ValueError(f"Got {len(weights)} weights for {len(models)} models")
    if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
        raise ValueError(f"Mixing weights must sum to 1, got {sum(weights)!r}")
    size = len(models[0])
    mixed = np.zeros(size, dtype=np.float64)
    for model, weight in zip(models, weights):
        if len(model) != size:
            raise ValueError(f"Model length mismatch: {len(model)} != {size}")
        mixed += weight * np.asarray(model, dtype=np.float64)
    return mixed


def mixing_weight(shard_size: int, cluster: Cluster, rule: str) -> float:
    """Return this worker's mixing weight; all workers' weights sum to 1."""
    if rule == "uniform":
        return 1.0 / cluster.size
    total = cluster.allreduce_sum_scalars([float(shard_size)])[0]
    if total == 0:
        return 1.0 / cluster.size
    return shard_size / total


def train_distributed_perceptron(
    shard: Sequence[TaskInstance],
    task: StructuredTask,
    cluster: Cluster,
    cfg: PerceptronConfig,
    hash_bits: int,
    on_round: Optional[RoundCallback] = None,
) -> ModelVector:
    """
    Train a structured perceptron with iterative parameter mixing.

    A round runs ``cfg.epochs_per_round`` local passes from the mixed weights, then mixes the
    local models with one allreduce of weight-scaled vectors.

    Args:
        shard: This worker's instances
        task: Structured task
        cluster: This worker's cluster handle
        cfg: Perceptron options
        hash_bits: Model size exponent
        on_round: Called after every round with its stats and the mixed weights

    Returns:
        The mixed weights, identical on every worker; w = 0 for zero rounds
    """
    shard = list(shard)
    weight = mixing_weight(len(shard), cluster, cfg.mixing)
    w = zero_model(hash_bits)
    elapsed = 0.0
    for round_index in range(cfg.rounds):
        started = time.perf_counter()
        local = w
        mistakes = 0
        for _ in range(cfg.epochs_per_round):
            local, errors = perceptron_local_pass(local, shard, task, averaged=cfg.averaged)
            mistakes += errors
        learned = time.perf_counter()
        w = cluster.allreduce_sum_vec(weight * local)
        total_mistakes = int(cluster.allreduce_sum_scalars([float(mistakes)])[0])
        finished = time.perf_counter()
        elapsed += finished - started

        stats = RoundStats(
            round=round_index,
            mistakes=total_mistakes,
            wall_time_s=elapsed,
            time_learning_s=learned - started,
            time_comm_s=finished - learned,
        )
        if cluster.rank == 0:
            logger.info("perceptron round %d mistakes=%d", round_index, total_mistakes)
        if on_round is not None:
            on_round(stats, w)
    return w


def train_simple_average(
    shard: Sequence[TaskInstance],
    task: StructuredTask,
    cluster: Cluster,
    cfg: TrainConfig,
) -> ModelVector:
    """
    Train a separate model per worker with the dual solver, then average the models uniformly.

    Each worker trains on its own shard through a single-worker cluster; only the final
    averaging touches ``cluster``.
    """
    with solo_cluster(cfg.comm_timeout_s) as local:
        result = train_worker(shard, task, cfg, local)
    logger.debug(
        "Rank %d local model done after %d iterations", cluster.rank, len(result.stats)
    )
    return cluster.allreduce_sum_vec(result.w / cluster.size)
