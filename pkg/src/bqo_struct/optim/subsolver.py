"""Local direction subproblem solved by dual coordinate descent.

Each worker minimizes ``g_H(d) = grad f(alpha)'d + 1/2 d'Hd`` over ``alpha + d >= 0`` for its own
block of ``H = theta * Qbar + A/2C + lambda * I``. Qbar has no cross-partition entries, so the
solve reads only local data and the synchronized w.
"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import numpy.typing as npt

from bqo_struct.core.dual import DualState, WorkingSetEntry, dual_gradient_entry
from bqo_struct.core.schemas import TrainConfig
from bqo_struct.core.sparse import ModelVector

logger = logging.getLogger(__name__)


@dataclass
class DirectionState:
    """
    Partial solution of one worker's subproblem.

    Attributes:
        d: Direction per working-set entry, in DualState.entries() order
        u: Local image sum d * phi (this worker's share of delta w)
        t: Per-instance sums of d
        g_value: Current g_H(d)
    """

    d: npt.NDArray[np.float64]
    u: ModelVector
    t: npt.NDArray[np.float64]
    g_value: float = 0.0


class Direction(NamedTuple):
    state: DirectionState
    delta_w: ModelVector
    g_value: float
    pg_reference: Optional[float]


def surrogate_lambda(dual: DualState, cfg: TrainConfig, theta: float) -> float:
    """Return lambda: explicit, or lambda_scale times the largest diagonal of theta*Qbar + A/2C."""
    if cfg.lambda_ is not None:
        return cfg.lambda_
    max_sq = max((entry.phi_sq_norm for _, entry in dual.entries()), default=0.0)
    return cfg.lambda_scale * (theta * max_sq + 1.0 / (2.0 * cfg.c))


class DirectionSolver:
    """Coordinate descent on one worker's block of the direction subproblem."""

    def __init__(
        self,
        dual: DualState,
        w: ModelVector,
        cfg: TrainConfig,
        theta: float,
        lam: float,
    ):
        self.cfg = cfg
        self.theta = theta
        self.lam = lam
        self.inv_2c = 1.0 / (2.0 * cfg.c)

        self.entries: List[WorkingSetEntry] = []
        owners: List[int] = []
        gradient: List[float] = []
        for position, inst in enumerate(dual.instances):
            for entry in inst.entries:
                self.entries.append(entry)
                owners.append(position)
                gradient.append(dual_gradient_entry(entry, inst.alpha_sum, w, cfg.c))
        self.owner = owners
        self.gradient = np.array(gradient, dtype=np.float64)
        self.h_diag = np.array(
            [theta * e.phi_sq_norm + self.inv_2c + lam for e in self.entries], dtype=np.float64
        )
        self.state = DirectionState(
            d=np.zeros(len(self.entries), dtype=np.float64),
            u=np.zeros_like(w),
            t=np.zeros(len(dual.instances), dtype=np.float64),
        )

    def partial_gradient(self, k: int) -> float:
        """Return the k-th coordinate of grad g_H at the current d."""
        entry = self.entries[k]
        state = self.state
        return float(
            self.gradient[k]
            + self.theta * entry.phi.dot(state.u)
            + state.t[self.owner[k]] * self.inv_2c
            + self.lam * state.d[k]
        )

    def _update(self, k: int) -> Tuple[float, float]:
        state = self.state
        entry = self.entries[k]
        g = self.partial_gradient(k)
        at_bound = entry.alpha + state.d[k] <= 0.0
        projected = min(g, 0.0) if at_bound else g
        if projected == 0.0:
            return 0.0, 0.0

        old = state.d[k]
        lower = -(entry.alpha + old)
        step = -g / self.h_diag[k]
        if step <= lower:
            # land exactly on the bound so alpha + d == 0 holds without rounding
            new = -entry.alpha
        else:
            new = old + step
        delta = float(new - old)
        if delta == 0.0:
            return 0.0, projected

        state.d[k] = new
        entry.phi.add_into(state.u, delta)
        state.t[self.owner[k]] += delta
        change = g * delta + 0.5 * self.h_diag[k] * delta * delta
        assert change <= 1e-12 * max(1.0, abs(state.g_value)), "g_H increased"
        state.g_value += change
        return delta, projected

    def coordinate_update(self, k: int) -> float:
        """
        Minimize g_H exactly along coordinate k, projected onto alpha + d >= 0.

        Returns:
            The applied change of d_k
        """
        delta, _ = self._update(k)
        return delta

    def surrogate_value(self) -> float:
        """Recompute g_H(d) from scratch."""
        state = self.state
        return float(
            np.dot(self.gradient, state.d)
            + 0.5
            * (
                self.theta * np.dot(state.u, state.u)
                + self.inv_2c * np.dot(state.t, state.t)
                + self.lam * np.dot(state.d, state.d)
            )
        )

    def solve(
        self,
        rng: np.random.Generator,
        pg_reference: Optional[float] = None,
    ) -> Optional[float]:
        """
        Run up to cfg.inner_epochs sweeps in fresh random orders.

        A sweep ends the solve when its largest projected gradient drops below
        ``cfg.inner_stop_ratio * pg_reference``. The first sweep ever run sets the reference.

        Returns:
            The projected-gradient reference to use in later solves
        """
        n = len(self.entries)
        if n == 0:
            return pg_reference
        for epoch in range(self.cfg.inner_epochs):
            max_pg = 0.0
            for k in rng.permutation(n):
                _, projected = self._update(int(k))
                max_pg = max(max_pg, abs(projected))
            if pg_reference is None:
                pg_reference = max_pg
            logger.debug("Inner epoch %d: max projected gradient %.3e", epoch, max_pg)
            if max_pg == 0.0 or max_pg < self.cfg.inner_stop_ratio * pg_reference:
                break
        return pg_reference


def solve_direction(
    dual: DualState,
    w: ModelVector,
    cfg: TrainConfig,
    workers: Optional[int] = None,
    rank: int = 0,
    outer_iter: int = 0,
    pg_reference: Optional[float] = None,
) -> Direction:
    """
    Solve one worker's direction subproblem approximately.

    Args:
        dual: This worker's dual state
        w: Synchronized weight vector
        cfg: Training configuration
        workers: Cluster size K used to default theta (cfg.workers if None)
        rank: Worker rank, part of the permutation seed
        outer_iter: Outer iteration, part of the permutation seed
        pg_reference: Projected-gradient reference from earlier solves on this worker

    Returns:
        Direction with the state, the local delta w, g_H(d) and the updated reference
    """
    theta = cfg.resolved_theta(workers if workers is not None else cfg.workers)
    solver = DirectionSolver(dual, w, cfg, theta, surrogate_lambda(dual, cfg, theta))
    rng = np.random.default_rng([cfg.rng_seed, rank, outer_iter])
    reference = solver.solve(rng, pg_reference)
    state = solver.state
    return Direction(state, state.u, state.g_value, reference)
