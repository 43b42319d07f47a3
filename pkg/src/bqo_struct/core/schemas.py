"""Core schemas: training configuration and run records."""

from typing import Optional

from pydantic import BaseModel, Field
from typing_extensions import Literal

Transport = Literal["inproc", "tcp"]
MixingRule = Literal["uniform", "by-shard-size"]


class TrainConfig(BaseModel):
    """
    Hyperparameters and stopping rules of the distributed dual solver.

    Attributes:
        c: Regularization constant C of the L2-loss SSVM
        theta: Scale of the block-diagonal Hessian surrogate; None means the worker count
        lambda_: Explicit ridge term of the surrogate; None derives it from lambda_scale
        lambda_scale: Ridge term relative to the largest surrogate diagonal
        hash_bits: Weight vector length is 2**hash_bits
        workers: Number of workers K
        inner_epochs: Maximum coordinate-descent sweeps per direction subproblem
        inner_stop_ratio: Sweep stops once the projected gradient falls below this fraction
            of the first sweep's value (0 disables the heuristic)
        outer_iters: Maximum number of outer iterations
        inference_interval: Run working-set growth every m-th outer iteration
        ws_violation_tol: Violation margin (loss units) required to add a structure
        prune_after: Drop entries whose alpha stayed 0 this many iterations (0 disables)
        rel_tol: Relative dual-objective change regarded as negligible
        patience: Consecutive negligible changes that end training
        rng_seed: Seed of the per-epoch coordinate permutations
        transport: Collective backend
        comm_timeout_s: Timeout of every collective call
        audit: Reconcile alpha sums, check w against alpha and record the primal objective
    """

    c: float = Field(0.1, gt=0, description="SSVM regularization constant C")
    theta: Optional[float] = Field(None, gt=0, description="Surrogate scale (default K)")
    lambda_: Optional[float] = Field(None, ge=0, description="Explicit surrogate ridge term")
    lambda_scale: float = Field(1e-4, ge=0, description="Ridge term relative to the diagonal")
    hash_bits: int = Field(18, ge=10, le=30, description="Feature hashing bits d")
    workers: int = Field(1, ge=1, description="Number of workers K")
    inner_epochs: int = Field(10, ge=1, description="Inner coordinate-descent epochs")
    inner_stop_ratio: float = Field(0.1, ge=0, description="Inner projected-gradient ratio")
    outer_iters: int = Field(100, ge=1, description="Outer iteration budget")
    inference_interval: int = Field(1, ge=1, description="Outer iterations between inferences")
    ws_violation_tol: float = Field(1e-3, gt=0, description="Working-set violation tolerance")
    prune_after: int = Field(2, ge=0, description="Zero-alpha iterations before pruning")
    rel_tol: float = Field(1e-6, ge=0, description="Negligible relative objective change")
    patience: int = Field(3, ge=1, description="Negligible changes before stopping")
    rng_seed: int = Field(42, description="Permutation seed")
    transport: Transport = Field("inproc", description="Collective backend")
    comm_timeout_s: float = Field(120.0, gt=0, description="Collective timeout in seconds")
    audit: bool = Field(False, description="Run consistency audits every iteration")

    model_config = {"frozen": True}

    def resolved_theta(self, workers: int) -> float:
        """Return theta, defaulting to the number of workers."""
        return float(workers) if self.theta is None else self.theta


class PerceptronConfig(BaseModel):
    """
    Distributed structured perceptron options.

    Attributes:
        epochs_per_round: Local passes over the shard between two mixing steps
        rounds: Number of mixing rounds
        mixing: Uniform weights or weights proportional to shard sizes
        averaged: Return the within-pass averaged weights instead of the last ones
    """

    epochs_per_round: int = Field(1, ge=1, description="Local epochs per round")
    rounds: int = Field(10, ge=0, description="Mixing rounds")
    mixing: MixingRule = Field("uniform", description="Mixing weight rule")
    averaged: bool = Field(False, description="Average weights within each pass")

    model_config = {"frozen": True}


class IterationStats(BaseModel):
    """One outer iteration of the dual solver."""

    outer_iter: int = Field(..., ge=0)
    dual_obj: float
    primal_obj: Optional[float] = Field(None, description="Set on audit runs only")
    eta: float = Field(..., ge=0)
    ws_added: int = Field(..., ge=0)
    ws_size: int = Field(..., ge=0)
    converged: bool = False
    wall_time_s: float = Field(..., ge=0, description="Training time since start")
    time_inference_s: float = Field(..., ge=0)
    time_learning_s: float = Field(..., ge=0)
    time_comm_s: float = Field(..., ge=0)


class MetricsRow(BaseModel):
    """One row of the metrics CSV."""

    method: str
    outer_iter: int = Field(..., ge=0)
    wall_time_s: float = Field(..., ge=0)
    dual_obj: Optional[float] = None
    test_accuracy: Optional[float] = Field(None, ge=0, le=1)
    ws_size: int = Field(0, ge=0)
    time_inference_s: float = Field(0.0, ge=0)
    time_learning_s: float = Field(0.0, ge=0)
    time_comm_s: float = Field(0.0, ge=0)


class LineSearchScalars(BaseModel):
    """
    Globally reduced inputs of the exact line search.

    Attributes:
        w_dw: w' delta_w
        dw_dw: delta_w' delta_w
        alpha_a_d: alpha'(A/2C)d
        d_a_d: d'(A/2C)d
        v_d: v'd
    """

    w_dw: float
    dw_dw: float
    alpha_a_d: float
    d_a_d: float
    v_d: float

    model_config = {"frozen": True}
