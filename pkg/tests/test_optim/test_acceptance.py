"""End-to-end convergence checks against the dense dual oracle."""

import numpy as np
import pytest
from oracles import dense_dual, multiclass_problem, solve_dense_dual

from bqo_struct.cli.corpus import load_sequence_corpus
from bqo_struct.cli.synthetic import generate_chain, write_chain
from bqo_struct.comm.inproc import spawn_inproc
from bqo_struct.core.dual import primal_objective
from bqo_struct.core.schemas import PerceptronConfig, TrainConfig
from bqo_struct.optim.baselines import train_distributed_perceptron, train_simple_average
from bqo_struct.optim.driver import (
    new_worker,
    run_worker,
    saturate_working_set,
    shard_round_robin,
    train,
)
from bqo_struct.tasks.chain import ChainTask

ORACLE_SEEDS = [0, 1, 2, 3, 4]


def oracle_problem(seed):
    rng = np.random.default_rng(100 + seed)
    instances = int(rng.integers(20, 51))
    labels = int(rng.integers(2, 5))
    return multiclass_problem(seed=seed, instances=instances, labels=labels, features=6)


def train_saturated(task, data, cfg, workers=1):
    """Train with every structure already in the working set."""
    shards = shard_round_robin(data, workers)

    def body(cluster):
        ctx = new_worker(shards[cluster.rank], task, cfg, cluster)
        saturate_working_set(ctx.dual, ctx.shard, task)
        return run_worker(ctx, cluster, cfg)

    return spawn_inproc(workers, body, cfg.comm_timeout_s)[0]


def relative_gap(value, optimum):
    return abs(value - optimum) / max(1.0, abs(optimum))


@pytest.mark.parametrize("seed", ORACLE_SEEDS)
def test_reaches_oracle_optimum(seed):
    """Test K = 1 training matches the projected-gradient optimum of the dense dual."""
    task, data = oracle_problem(seed)
    cfg = TrainConfig(
        hash_bits=task.hash_bits, c=0.1, prune_after=0, outer_iters=300, rel_tol=1e-10
    )
    optimum = solve_dense_dual(dense_dual(task, data, cfg.c)).value

    result = train_saturated(task, data, cfg)
    assert relative_gap(result.stats[-1].dual_obj, optimum) <= 1e-3


@pytest.mark.parametrize("seed", ORACLE_SEEDS)
def test_strong_duality(seed):
    """Test the primal and dual objectives meet at convergence."""
    task, data = oracle_problem(seed)
    cfg = TrainConfig(
        hash_bits=task.hash_bits, c=0.1, prune_after=0, outer_iters=300, rel_tol=1e-10
    )
    result = train_saturated(task, data, cfg)
    dual = result.stats[-1].dual_obj
    primal = primal_objective(result.w, data, task, cfg.c)
    assert abs(primal + dual) <= 1e-3 * max(1.0, abs(dual))


def test_linear_rate():
    """Test the optimality gap shrinks geometrically with a saturated working set."""
    task, data = oracle_problem(0)
    cfg = TrainConfig(
        hash_bits=task.hash_bits,
        c=0.1,
        prune_after=0,
        inner_epochs=1,
        outer_iters=30,
        rel_tol=0.0,
        workers=2,
    )
    optimum = solve_dense_dual(dense_dual(task, data, cfg.c)).value
    trace = [s.dual_obj for s in train_saturated(task, data, cfg, workers=2).stats]

    gaps = np.maximum(np.array(trace) - optimum, 1e-14)
    window = np.arange(5, min(26, len(gaps)))
    slope = np.polyfit(window, np.log10(gaps[window]), 1)[0]
    assert slope < -0.01
    for before, after, gap in zip(trace, trace[1:], gaps):
        if gap > 1e-10:
            assert after < before


@pytest.mark.parametrize("seed", ORACLE_SEEDS)
def test_inexact_subproblems_still_converge(seed):
    """Test a single inner sweep per iteration still reaches the optimum."""
    task, data = oracle_problem(seed)
    cfg = TrainConfig(
        hash_bits=task.hash_bits,
        c=0.1,
        prune_after=0,
        inner_epochs=1,
        outer_iters=500,
        rel_tol=1e-12,
    )
    optimum = solve_dense_dual(dense_dual(task, data, cfg.c)).value
    result = train_saturated(task, data, cfg)
    assert relative_gap(result.stats[-1].dual_obj, optimum) <= 1e-3


def test_transport_equivalence(tcp_runner):
    """Test in-process and TCP runs produce identical objective traces."""
    task, data = multiclass_problem(seed=21, instances=16, labels=3)
    cfg = TrainConfig(hash_bits=task.hash_bits, outer_iters=10, workers=2, comm_timeout_s=30.0)
    shards = shard_round_robin(data, 2)

    def body(cluster):
        ctx = new_worker(shards[cluster.rank], task, cfg, cluster)
        return run_worker(ctx, cluster, cfg)

    in_process = spawn_inproc(2, body, cfg.comm_timeout_s)
    over_tcp = tcp_runner(2, body, timeout=30.0)
    for a, b in zip(in_process, over_tcp):
        assert [s.dual_obj for s in a.stats] == [s.dual_obj for s in b.stats]
        assert [s.eta for s in a.stats] == [s.eta for s in b.stats]
        assert a.w.tobytes() == b.w.tobytes()


@pytest.fixture(scope="module")
def chain_corpus(tmp_path_factory):
    """500 training and 100 test sequences of length 8 over 5 labels (seed 7)."""
    path = tmp_path_factory.mktemp("corpus") / "chain.tsv"
    with open(path, "w", encoding="utf-8") as handle:
        write_chain(handle, generate_chain(600, 8, 5, seed=7))
    corpus = load_sequence_corpus(path)
    return corpus.instances[:500], corpus.instances[500:], corpus.num_labels


@pytest.mark.slow
def test_partition_invariance(chain_corpus):
    """Test K = 4 reaches the K = 1 test accuracy within half a point."""
    train_set, test_set, labels = chain_corpus
    task = ChainTask(labels, 16)
    accuracy = {}
    for workers in (1, 4):
        cfg = TrainConfig(hash_bits=16, outer_iters=200, workers=workers)
        result = train(shard_round_robin(train_set, workers), task, cfg)
        accuracy[workers] = task.accuracy(result.w, test_set)
    assert abs(accuracy[4] - accuracy[1]) <= 0.005


@pytest.mark.slow
def test_baselines_do_not_beat_bqo(chain_corpus):
    """Test the dual solver is at least as accurate as the perceptron and model averaging."""
    train_set, test_set, labels = chain_corpus
    task = ChainTask(labels, 16)
    cfg = TrainConfig(hash_bits=16, outer_iters=200, workers=4)
    shards = shard_round_robin(train_set, 4)

    bqo = task.accuracy(train(shards, task, cfg).w, test_set)
    perceptron = spawn_inproc(
        4,
        lambda cluster: train_distributed_perceptron(
            shards[cluster.rank], task, cluster, PerceptronConfig(rounds=10), cfg.hash_bits
        ),
        cfg.comm_timeout_s,
    )[0]
    averaged = spawn_inproc(
        4,
        lambda cluster: train_simple_average(shards[cluster.rank], task, cluster, cfg),
        cfg.comm_timeout_s,
    )[0]
    assert bqo >= task.accuracy(perceptron, test_set)
    assert bqo >= task.accuracy(averaged, test_set)
