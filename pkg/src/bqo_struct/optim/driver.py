"""Outer loop of the distributed dual solver.

Every worker runs the same bulk-synchronous sequence per outer iteration: grow the working set
by loss-augmented inference, solve the local direction subproblem, allreduce delta w,
allreduce the line-search scalars, then apply ``alpha += eta * d`` and ``w += eta * delta_w``.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, TypeVar

import numpy as np

from bqo_struct.comm.base import Cluster, ReduceMode
from bqo_struct.comm.inproc import spawn_inproc
from bqo_struct.core.dual import (
    DualState,
    check_consistency,
    objective_from_terms,
    squared_slack_sum,
)
from bqo_struct.core.schemas import IterationStats, LineSearchScalars, TrainConfig
from bqo_struct.core.sparse import ModelVector, zero_model
from bqo_struct.optim.subsolver import DirectionState, solve_direction
from bqo_struct.tasks.base import StructuredTask, TaskInstance

logger = logging.getLogger(__name__)

DEGENERATE_CURVATURE = 1e-12
ZERO_SNAP = 1e-12

T = TypeVar("T")

# w_dw, dw_dw, alpha_a_d, d_a_d, v_d, cap, added
STEP_MODES: List[ReduceMode] = ["sum", "sum", "sum", "sum", "sum", "min", "sum"]

IterationCallback = Callable[[IterationStats, ModelVector], None]


class StepSize(NamedTuple):
    eta: float
    eta_star: float
    converged: bool


class TrainResult(NamedTuple):
    w: ModelVector
    stats: List[IterationStats]


@dataclass
class WorkerContext:
    """Everything one worker owns across outer iterations."""

    rank: int
    size: int
    task: StructuredTask
    shard: List[TaskInstance]
    dual: DualState
    w: ModelVector
    pg_reference: Optional[float] = None
    outer_iter: int = 0
    elapsed: float = 0.0
    history: List[IterationStats] = field(default_factory=list)


def shard_round_robin(instances: Sequence[T], workers: int) -> List[List[T]]:
    """Split instances into K shards; instance i goes to shard i mod K."""
    if workers < 1:
        raise ValueError("At least one shard is required")
    return [list(instances[k::workers]) for k in range(workers)]


def grow_working_set(
    dual: DualState,
    shard: Sequence[TaskInstance],
    w: ModelVector,
    task: StructuredTask,
    tol: float,
) -> int:
    """
    Add the most violated structure of every local instance whose violation exceeds its slack.

    An instance's slack under the L2 loss is xi_i = s_i / (2C).

    Args:
        dual: This worker's dual state, aligned with ``shard``
        shard: This worker's instances
        w: Synchronized weight vector
        task: Task providing loss-augmented inference
        tol: Violation margin in loss units

    Returns:
        Number of entries added
    """
    added = 0
    inv_2c = 1.0 / (2.0 * dual.config.c)
    for inst_state, instance in zip(dual.instances, shard):
        y_hat, violation = task.loss_augmented_argmax(w, instance)
        if y_hat == instance.gold or y_hat in inst_state:
            continue
        if violation > inst_state.alpha_sum * inv_2c + tol:
            inst_state.add(task.make_entry(instance, y_hat))
            added += 1
    return added


def saturate_working_set(
    dual: DualState, shard: Sequence[TaskInstance], task: StructuredTask
) -> int:
    """Add every enumerable non-gold structure of every local instance."""
    added = 0
    for inst_state, instance in zip(dual.instances, shard):
        for y in task.enumerate_structures(instance):
            if y != instance.gold and y not in inst_state:
                inst_state.add(task.make_entry(instance, y))
                added += 1
    return added


def line_search(scalars: LineSearchScalars, cap: float) -> StepSize:
    """
    Exact line search along d, capped to keep alpha feasible.

    eta* = -(w'dw + alpha'(A/2C)d - v'd) / (dw'dw + d'(A/2C)d) and eta = min(cap, eta*).

    Args:
        scalars: Globally reduced line-search scalars
        cap: Largest step keeping alpha + eta * d >= 0 (inf when d >= 0)

    Returns:
        StepSize; a curvature below 1e-12 means d = 0 and yields eta = 0 with converged set
    """
    curvature = scalars.dw_dw + scalars.d_a_d
    if curvature <= DEGENERATE_CURVATURE:
        return StepSize(0.0, 0.0, True)
    eta_star = -(scalars.w_dw + scalars.alpha_a_d - scalars.v_d) / curvature
    if eta_star < 0.0:
        logger.debug("Negative exact step %.3e clamped to 0", eta_star)
        eta_star = 0.0
    return StepSize(min(cap, eta_star), eta_star, False)


def line_search_terms(dual: DualState, direction: DirectionState) -> Tuple[float, float, float]:
    """Return this worker's shares of alpha'(A/2C)d, d'(A/2C)d and v'd."""
    inv_2c = 1.0 / (2.0 * dual.config.c)
    alpha_sums = np.array([inst.alpha_sum for inst in dual.instances], dtype=np.float64)
    deltas = np.array([entry.delta for _, entry in dual.entries()], dtype=np.float64)
    return (
        float(np.dot(alpha_sums, direction.t)) * inv_2c,
        float(np.dot(direction.t, direction.t)) * inv_2c,
        float(np.dot(deltas, direction.d)),
    )


def feasibility_cap(dual: DualState, d: np.ndarray) -> float:
    """Return min over d_k < 0 of alpha_k / -d_k, or inf."""
    cap = math.inf
    for k, (_, entry) in enumerate(dual.entries()):
        if d[k] < 0.0:
            cap = min(cap, entry.alpha / -d[k])
    return cap


def apply_step(dual: DualState, direction: DirectionState, eta: float, prune_after: int) -> int:
    """
    Apply alpha += eta * d with exact clamping at zero and prune stale entries.

    Returns:
        Number of pruned entries
    """
    d = direction.d
    k = 0
    for position, inst in enumerate(dual.instances):
        for entry in inst.entries:
            step = d[k]
            k += 1
            if eta > 0.0 and step != 0.0:
                moved = entry.alpha + eta * step
                # rounding at the capped coordinate must still reach the bound
                entry.alpha = moved if moved > ZERO_SNAP * entry.alpha else 0.0
            entry.zero_streak = entry.zero_streak + 1 if entry.alpha == 0.0 else 0
        if eta > 0.0:
            inst.alpha_sum += eta * direction.t[position]

    pruned = 0
    if prune_after > 0:
        for inst in dual.instances:
            pruned += inst.prune(prune_after)
    return pruned


def outer_iteration(ctx: WorkerContext, cluster: Cluster, cfg: TrainConfig) -> IterationStats:
    """
    Run one outer iteration on this worker.

    Args:
        ctx: This worker's state, updated in place
        cluster: This worker's cluster handle
        cfg: Training configuration

    Returns:
        IterationStats identical on every worker except for the timings

    Raises:
        CollectiveError: If any collective fails
        ConsistencyError: If an audit fails
    """
    started = time.perf_counter()
    time_inference = time_learning = time_comm = 0.0
    dual = ctx.dual

    ran_inference = ctx.outer_iter % cfg.inference_interval == 0
    added = 0
    if ran_inference:
        mark = time.perf_counter()
        added = grow_working_set(dual, ctx.shard, ctx.w, ctx.task, cfg.ws_violation_tol)
        time_inference += time.perf_counter() - mark

    mark = time.perf_counter()
    direction = solve_direction(
        dual,
        ctx.w,
        cfg,
        workers=cluster.size,
        rank=ctx.rank,
        outer_iter=ctx.outer_iter,
        pg_reference=ctx.pg_reference,
    )
    ctx.pg_reference = direction.pg_reference
    state = direction.state
    alpha_a_d, d_a_d, v_d = line_search_terms(dual, state)
    local = [0.0, 0.0, alpha_a_d, d_a_d, v_d, feasibility_cap(dual, state.d), float(added)]
    time_learning += time.perf_counter() - mark

    mark = time.perf_counter()
    delta_w = cluster.allreduce_sum_vec(direction.delta_w)
    if ctx.rank == 0:
        local[0] = float(np.dot(ctx.w, delta_w))
        local[1] = float(np.dot(delta_w, delta_w))
    reduced = cluster.allreduce_scalars(local, modes=STEP_MODES)
    time_comm += time.perf_counter() - mark

    mark = time.perf_counter()
    scalars = LineSearchScalars(
        w_dw=reduced[0], dw_dw=reduced[1], alpha_a_d=reduced[2], d_a_d=reduced[3], v_d=reduced[4]
    )
    step = line_search(scalars, float(reduced[5]))
    global_added = int(reduced[6])
    pruned = apply_step(dual, state, step.eta, cfg.prune_after)
    if step.eta > 0.0:
        ctx.w += step.eta * delta_w
    if pruned:
        logger.debug("Rank %d pruned %d entries", ctx.rank, pruned)
    s_sq, alpha_delta = dual.local_terms()
    time_learning += time.perf_counter() - mark

    slack_sq = 0.0
    if cfg.audit:
        mark = time.perf_counter()
        dual.reconcile()
        slack_sq = squared_slack_sum(ctx.w, ctx.task, ctx.shard)
        time_inference += time.perf_counter() - mark

        mark = time.perf_counter()
        rebuilt = cluster.allreduce_sum_vec(dual.local_w(cfg.hash_bits))
        time_comm += time.perf_counter() - mark
        check_consistency(ctx.w, rebuilt)

    mark = time.perf_counter()
    totals = cluster.allreduce_sum_scalars([s_sq, alpha_delta, float(dual.size), slack_sq])
    time_comm += time.perf_counter() - mark

    dual_obj = objective_from_terms(ctx.w, cfg.c, totals[0], totals[1])
    primal_obj = None
    if cfg.audit:
        primal_obj = 0.5 * float(np.dot(ctx.w, ctx.w)) + cfg.c * float(totals[3])

    if ctx.history:
        previous = ctx.history[-1].dual_obj
        if dual_obj > previous + 1e-9 * max(1.0, abs(previous)):
            logger.warning("Dual objective increased: %.12e -> %.12e", previous, dual_obj)

    ctx.elapsed += time.perf_counter() - started
    stats = IterationStats(
        outer_iter=ctx.outer_iter,
        dual_obj=dual_obj,
        primal_obj=primal_obj,
        eta=step.eta,
        ws_added=global_added,
        ws_size=int(totals[2]),
        converged=ran_inference and global_added == 0 and step.converged,
        wall_time_s=ctx.elapsed,
        time_inference_s=time_inference,
        time_learning_s=time_learning,
        time_comm_s=time_comm,
    )
    ctx.history.append(stats)
    ctx.outer_iter += 1
    if ctx.rank == 0:
        logger.info(
            "iter %d dual=%.10e eta=%.4e added=%d ws=%d",
            stats.outer_iter,
            stats.dual_obj,
            stats.eta,
            stats.ws_added,
            stats.ws_size,
        )
    return stats


def _relative_change(previous: float, current: float) -> float:
    scale = max(abs(previous), abs(current))
    return abs(current - previous) / scale if scale > 0.0 else 0.0


def new_worker(
    shard: Sequence[TaskInstance],
    task: StructuredTask,
    cfg: TrainConfig,
    cluster: Cluster,
) -> WorkerContext:
    """Create a cold-start worker context with alpha = 0 and w = 0."""
    shard = list(shard)
    return WorkerContext(
        rank=cluster.rank,
        size=cluster.size,
        task=task,
        shard=shard,
        dual=DualState.for_shard(shard, cfg),
        w=zero_model(cfg.hash_bits),
    )


def run_worker(
    ctx: WorkerContext,
    cluster: Cluster,
    cfg: TrainConfig,
    on_iteration: Optional[IterationCallback] = None,
) -> TrainResult:
    """
    Run outer iterations on an existing worker context until a stopping rule fires.

    Training stops after cfg.outer_iters iterations, when an inference iteration adds nothing
    and finds d = 0, or after cfg.patience consecutive relative objective changes below
    cfg.rel_tol. Every worker reaches the same decision because the inputs are reduced values.
    """
    stats: List[IterationStats] = []
    negligible = 0
    previous: Optional[float] = None
    for _ in range(cfg.outer_iters):
        current = outer_iteration(ctx, cluster, cfg)
        stats.append(current)
        if on_iteration is not None:
            on_iteration(current, ctx.w)
        if current.converged:
            logger.debug("Rank %d converged at iteration %d", ctx.rank, current.outer_iter)
            break
        if previous is not None and _relative_change(previous, current.dual_obj) < cfg.rel_tol:
            negligible += 1
        else:
            negligible = 0
        previous = current.dual_obj
        if negligible >= cfg.patience:
            break
    return TrainResult(ctx.w, stats)


def train_worker(
    shard: Sequence[TaskInstance],
    task: StructuredTask,
    cfg: TrainConfig,
    cluster: Cluster,
    on_iteration: Optional[IterationCallback] = None,
) -> TrainResult:
    """
    Train on one worker of a K-worker cluster, starting from alpha = 0.

    Args:
        shard: This worker's disjoint part of the training data
        task: Structured task
        cfg: Training configuration
        cluster: This worker's cluster handle
        on_iteration: Called after every outer iteration with the stats and current w

    Returns:
        TrainResult with the final w (identical on every worker) and the stats trace
    """
    total = int(cluster.allreduce_sum_scalars([float(len(shard))])[0])
    if total == 0:
        return TrainResult(zero_model(cfg.hash_bits), [])
    ctx = new_worker(shard, task, cfg, cluster)
    return run_worker(ctx, cluster, cfg, on_iteration)


def train(
    shards: Sequence[Sequence[TaskInstance]],
    task: StructuredTask,
    cfg: TrainConfig,
    on_iteration: Optional[IterationCallback] = None,
) -> TrainResult:
    """
    Train on an in-process cluster with one worker thread per shard.

    Args:
        shards: K disjoint parts of the training data
        task: Structured task
        cfg: Training configuration
        on_iteration: Called on rank 0 after every outer iteration

    Returns:
        Rank 0's TrainResult
    """

    def body(cluster: Cluster) -> TrainResult:
        callback = on_iteration if cluster.rank == 0 else None
        return train_worker(shards[cluster.rank], task, cfg, cluster, callback)

    return spawn_inproc(len(shards), body, cfg.comm_timeout_s)[0]
