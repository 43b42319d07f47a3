"""Tests for the outer loop of the dual solver."""

import math

import numpy as np
import pytest
from oracles import (
    chain_problem,
    dense_dual,
    multiclass_problem,
    randomize_alpha,
    saturated_state,
    solve_dense_dual,
)

from bqo_struct.comm.inproc import solo_cluster, spawn_inproc
from bqo_struct.core.dual import DualState, dual_objective, reconstruct_w
from bqo_struct.core.schemas import LineSearchScalars, TrainConfig
from bqo_struct.core.sparse import zero_model
from bqo_struct.optim.driver import (
    apply_step,
    feasibility_cap,
    grow_working_set,
    line_search,
    line_search_terms,
    new_worker,
    outer_iteration,
    run_worker,
    saturate_working_set,
    shard_round_robin,
    train,
    train_worker,
)
from bqo_struct.optim.subsolver import solve_direction


class TestLineSearch:
    """Test the exact capped line search."""

    def test_unconstrained_step(self):
        """Test eta* = -(w'dw + alpha'Ad - v'd) / (dw'dw + d'Ad)."""
        scalars = LineSearchScalars(w_dw=-1.0, dw_dw=2.0, alpha_a_d=0.5, d_a_d=2.0, v_d=1.5)
        step = line_search(scalars, math.inf)
        assert step.eta == pytest.approx(0.5)
        assert step.eta_star == pytest.approx(0.5)
        assert not step.converged

    def test_cap_applies(self):
        """Test the step is capped by feasibility."""
        scalars = LineSearchScalars(w_dw=-4.0, dw_dw=1.0, alpha_a_d=0.0, d_a_d=1.0, v_d=0.0)
        step = line_search(scalars, 0.25)
        assert step.eta == 0.25
        assert step.eta_star == pytest.approx(2.0)

    def test_zero_direction_converges(self):
        """Test a vanishing curvature yields eta = 0 and convergence."""
        scalars = LineSearchScalars(w_dw=0.0, dw_dw=0.0, alpha_a_d=0.0, d_a_d=1e-13, v_d=0.0)
        assert line_search(scalars, math.inf) == (0.0, 0.0, True)

    def test_scalar_problem_step(self):
        """Test a unit direction on f = 3 alpha^2 - alpha from 0 gives eta* = 1/6."""
        scalars = LineSearchScalars(w_dw=0.0, dw_dw=1.0, alpha_a_d=0.0, d_a_d=5.0, v_d=1.0)
        step = line_search(scalars, math.inf)
        assert step.eta == pytest.approx(1.0 / 6.0, rel=1e-12)
        assert not step.converged

    def test_feasibility_cap(self):
        """Test the cap is the smallest alpha / -d over decreasing coordinates."""
        task, data = multiclass_problem(seed=0, instances=1, labels=3)
        cfg = TrainConfig(hash_bits=task.hash_bits)
        state = saturated_state(task, data, cfg)
        state.instances[0].entries[0].alpha = 0.5
        state.instances[0].entries[1].alpha = 0.2
        assert feasibility_cap(state, np.array([-1.0, -0.1])) == pytest.approx(0.5)
        assert feasibility_cap(state, np.array([1.0, 0.0])) == math.inf

    def test_exact_step_minimizes_objective(self):
        """Test f(alpha + eta* d) is below f at eta* +/- 1e-4."""
        for seed in range(5):
            task, data = multiclass_problem(seed=seed, instances=6)
            cfg = TrainConfig(hash_bits=task.hash_bits, theta=3.0)
            state = saturated_state(task, data, cfg)
            randomize_alpha(state, np.random.default_rng(seed))
            dense = dense_dual(task, data, cfg.c)
            alpha = np.array([e.alpha for _, e in state.entries()])
            w = reconstruct_w([state], cfg.hash_bits)

            direction = solve_direction(state, w, cfg, workers=1)
            dw = direction.delta_w
            a_d, d_a_d, v_d = line_search_terms(state, direction.state)
            scalars = LineSearchScalars(
                w_dw=float(w @ dw), dw_dw=float(dw @ dw), alpha_a_d=a_d, d_a_d=d_a_d, v_d=v_d
            )
            eta = line_search(scalars, math.inf).eta_star
            d = direction.state.d

            def along(step):
                return dense.value(alpha + step * d)

            assert along(eta) < along(eta + 1e-4)
            assert along(eta) < along(eta - 1e-4)


class TestWorkingSet:
    """Test working-set growth."""

    def test_grow_adds_most_violated(self):
        """Test every violated instance gets its loss-augmented argmax."""
        task, data = multiclass_problem(seed=1, instances=5)
        cfg = TrainConfig(hash_bits=task.hash_bits)
        state = DualState.for_shard(data, cfg)
        w = zero_model(cfg.hash_bits)

        assert grow_working_set(state, data, w, task, cfg.ws_violation_tol) == 5
        for inst, instance in zip(state.instances, data):
            expected, _ = task.loss_augmented_argmax(w, instance)
            assert [e.structure_key for e in inst.entries] == [expected]
        assert grow_working_set(state, data, w, task, cfg.ws_violation_tol) == 0

    def test_slack_blocks_growth(self):
        """Test a violation covered by the instance slack adds nothing."""
        task, data = multiclass_problem(seed=2, instances=1)
        cfg = TrainConfig(hash_bits=task.hash_bits, c=0.1)
        state = DualState.for_shard(data, cfg)
        state.instances[0].alpha_sum = 0.2  # slack 0.2 / 0.2 = 1.0 covers violation 1
        assert grow_working_set(state, data, zero_model(cfg.hash_bits), task, 1e-3) == 0

    def test_converged_state_adds_nothing(self):
        """Test growth after training to the optimum finds no violated structure."""
        task, data = multiclass_problem(seed=5, instances=6)
        cfg = TrainConfig(hash_bits=task.hash_bits, c=0.1, outer_iters=300, rel_tol=1e-12)
        cluster = solo_cluster()
        ctx = new_worker(data, task, cfg, cluster)
        run_worker(ctx, cluster, cfg)

        size = ctx.dual.size
        assert grow_working_set(ctx.dual, ctx.shard, ctx.w, task, cfg.ws_violation_tol) == 0
        assert ctx.dual.size == size

    def test_saturate(self):
        """Test saturation adds every non-gold structure once."""
        task, data = chain_problem(seed=0, sequences=2, length=2, labels=3)
        cfg = TrainConfig(hash_bits=task.hash_bits)
        state = DualState.for_shard(data, cfg)
        assert saturate_working_set(state, data, task) == 2 * (9 - 1)
        assert saturate_working_set(state, data, task) == 0

    def test_apply_step_clamps_and_tracks_sums(self):
        """Test alpha stays non-negative and s_i follows the step."""
        task, data = multiclass_problem(seed=3, instances=2)
        cfg = TrainConfig(hash_bits=task.hash_bits, prune_after=0)
        state = saturated_state(task, data, cfg)
        for _, entry in state.entries():
            entry.alpha = 0.5
        for inst in state.instances:
            inst.alpha_sum = 1.0
        direction = solve_direction(state, zero_model(cfg.hash_bits), cfg, workers=1)
        direction.state.d[:] = [-1.0, 0.5, -0.5, 0.0]
        direction.state.t[:] = [-0.5, -0.5]

        apply_step(state, direction.state, 0.5, prune_after=0)
        assert [e.alpha for _, e in state.entries()] == [0.0, 0.75, 0.25, 0.5]
        assert [inst.alpha_sum for inst in state.instances] == [0.75, 0.75]
        state.reconcile()


def test_shard_round_robin():
    """Test instance i goes to shard i mod K."""
    assert shard_round_robin(list(range(7)), 3) == [[0, 3, 6], [1, 4], [2, 5]]
    assert shard_round_robin([1, 2], 4) == [[1], [2], [], []]
    with pytest.raises(ValueError):
        shard_round_robin([1], 0)


def test_empty_dataset():
    """Test training on no data returns w = 0 and no iterations."""
    task, _ = multiclass_problem(seed=0)
    cfg = TrainConfig(hash_bits=task.hash_bits)
    result = train([[], []], task, cfg)
    assert not result.w.any()
    assert result.stats == []


def test_single_instance_separable():
    """Test one instance trains to a correct prediction."""
    task, data = multiclass_problem(seed=4, instances=1)
    cfg = TrainConfig(hash_bits=task.hash_bits, c=1.0, outer_iters=50)
    result = train([data], task, cfg)
    assert task.predict(result.w, data[0]) == data[0].gold
    assert result.stats[0].ws_added == 1


@pytest.mark.parametrize("workers", [1, 2, 4, 8])
def test_descent_and_feasibility(workers):
    """Test the dual objective never increases and every alpha stays non-negative."""
    task, data = chain_problem(seed=workers, sequences=16, length=3)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=15, workers=workers)
    shards = shard_round_robin(data, workers)

    def body(cluster):
        ctx = new_worker(shards[cluster.rank], task, cfg, cluster)
        result = run_worker(ctx, cluster, cfg)
        return result, ctx.dual.min_alpha()

    outcomes = spawn_inproc(workers, body, timeout=30.0)
    objectives = [s.dual_obj for s in outcomes[0][0].stats]
    for before, after in zip(objectives, objectives[1:]):
        assert after <= before + 1e-12 * max(1.0, abs(before))
    assert objectives[-1] < 0.0
    assert all(min_alpha >= 0.0 for _, min_alpha in outcomes)
    for result, _ in outcomes[1:]:
        assert result.w.tobytes() == outcomes[0][0].w.tobytes()


def test_audit_mode_records_primal():
    """Test audits pass and report a primal objective at least minus the dual."""
    task, data = chain_problem(seed=9, sequences=8, length=3)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=8, audit=True, workers=2)
    result = train(shard_round_robin(data, 2), task, cfg)
    for stats in result.stats:
        assert stats.primal_obj is not None
        assert stats.primal_obj + stats.dual_obj >= -1e-9


def test_inference_interval():
    """Test working-set growth only runs every m-th iteration."""
    task, data = chain_problem(seed=5, sequences=8, length=3)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=7, inference_interval=3, rel_tol=0.0)
    stats = train([data], task, cfg).stats
    for record in stats:
        if record.outer_iter % 3:
            assert record.ws_added == 0
            assert not record.converged


def test_callback_sees_every_iteration():
    """Test the per-iteration callback gets the stats and the current model."""
    task, data = multiclass_problem(seed=6, instances=10)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=5)
    seen = []
    result = train([data[::2], data[1::2]], task, cfg, lambda s, w: seen.append((s, w.copy())))
    assert [s.outer_iter for s, _ in seen] == [s.outer_iter for s in result.stats]
    assert np.array_equal(seen[-1][1], result.w)
    times = [s.wall_time_s for s, _ in seen]
    assert times == sorted(times)


def test_train_worker_on_solo_cluster_matches_train():
    """Test a K = 1 run is the same through train and train_worker."""
    task, data = multiclass_problem(seed=7, instances=12)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=6)
    direct = train_worker(data, task, cfg, solo_cluster())
    threaded = train([data], task, cfg)
    assert direct.w.tobytes() == threaded.w.tobytes()
    assert [s.dual_obj for s in direct.stats] == [s.dual_obj for s in threaded.stats]


def test_scalar_problem_cold_start(scalar_problem):
    """Test one outer iteration from alpha = 0 lands on the optimum alpha = 1/6."""
    task, data, cfg = scalar_problem
    cluster = solo_cluster()
    ctx = new_worker(data, task, cfg, cluster)
    stats = outer_iteration(ctx, cluster, cfg)

    (entry,) = ctx.dual.instances[0].entries
    assert stats.ws_added == 1
    assert stats.eta == pytest.approx(1.0, rel=1e-12)
    assert entry.alpha == pytest.approx(1.0 / 6.0, rel=1e-12)
    assert stats.dual_obj == pytest.approx(-1.0 / 12.0, rel=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_surrogate_is_newton_step(seed):
    """Test K = 1, theta = 1 and a tiny lambda remove nearly all of the gap in one step."""
    task, data = multiclass_problem(seed=seed, instances=8, labels=3, features=5)
    cfg = TrainConfig(
        hash_bits=task.hash_bits,
        c=0.1,
        theta=1.0,
        lambda_=1e-8,
        inner_epochs=500,
        inner_stop_ratio=0.0,
        prune_after=0,
    )
    optimum = solve_dense_dual(dense_dual(task, data, cfg.c)).value
    cluster = solo_cluster()
    ctx = new_worker(data, task, cfg, cluster)
    saturate_working_set(ctx.dual, ctx.shard, task)
    randomize_alpha(ctx.dual, np.random.default_rng(seed))
    ctx.w = reconstruct_w([ctx.dual], cfg.hash_bits)
    before = dual_objective([ctx.dual], ctx.w, cfg.c)

    after = outer_iteration(ctx, cluster, cfg).dual_obj
    assert before - optimum > 1e-3
    assert after - optimum <= 0.01 * (before - optimum)
