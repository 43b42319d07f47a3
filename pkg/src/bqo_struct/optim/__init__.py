"""Optimization: direction subproblem, outer driver and baseline methods."""

from bqo_struct.optim.baselines import (
    RoundStats,
    mix_parameters,
    perceptron_local_pass,
    train_distributed_perceptron,
    train_simple_average,
)
from bqo_struct.optim.driver import (
    StepSize,
    TrainResult,
    WorkerContext,
    grow_working_set,
    line_search,
    outer_iteration,
    saturate_working_set,
    shard_round_robin,
    train,
    train_worker,
)
from bqo_struct.optim.subsolver import (
    Direction,
    DirectionSolver,
    DirectionState,
    solve_direction,
)

__all__ = [
    # Subproblem
    "DirectionState",
    "Direction",
    "DirectionSolver",
    "solve_direction",
    # Driver
    "WorkerContext",
    "StepSize",
    "TrainResult",
    "line_search",
    "grow_working_set",
    "saturate_working_set",
    "outer_iteration",
    "train_worker",
    "train",
    "shard_round_robin",
    # Baselines
    "RoundStats",
    "perceptron_local_pass",
    "mix_parameters",
    "train_distributed_perceptron",
    "train_simple_average",
]
