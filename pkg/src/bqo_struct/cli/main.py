"""Command line entry point: ``bqo-struct train|gen|eval``."""

import argparse
import logging
import sys
import time
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

from pydantic import ValidationError

from bqo_struct.cli.corpus import Corpus, load_multiclass, load_sequence_corpus
from bqo_struct.cli.metrics import MetricsWriter, configure_logging
from bqo_struct.cli.model_file import load_model, save_model
from bqo_struct.cli.synthetic import (
    generate_chain,
    generate_multiclass,
    write_chain,
    write_multiclass,
)
from bqo_struct.comm.base import Cluster
from bqo_struct.comm.inproc import spawn_inproc
from bqo_struct.comm.tcp import connect, parse_address
from bqo_struct.core.exceptions import (
    BqoStructError,
    CollectiveError,
    CorpusParseError,
    ModelFormatError,
)
from bqo_struct.core.schemas import IterationStats, MetricsRow, PerceptronConfig, TrainConfig
from bqo_struct.core.sparse import ModelVector
from bqo_struct.optim.baselines import (
    RoundStats,
    train_distributed_perceptron,
    train_simple_average,
)
from bqo_struct.optim.driver import shard_round_robin, train_worker
from bqo_struct.tasks import TASKS
from bqo_struct.tasks.base import StructuredTask, TaskInstance

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_CLUSTER = 3

T = TypeVar("T")


class UsageError(BqoStructError):
    """Raised for flag combinations argparse cannot check on its own."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bqo-struct", description="Distributed L2-loss structured SVM training"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train a model")
    train.add_argument("--task", choices=sorted(TASKS), required=True)
    train.add_argument("--method", choices=["bqo", "perceptron", "average"], default="bqo")
    train.add_argument("--train", required=True, help="Training corpus")
    train.add_argument("--test", help="Test corpus scored after every iteration")
    train.add_argument("--workers", type=int, default=1)
    train.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    train.add_argument("--coordinator", help="HOST:PORT of rank 0 (tcp only)")
    train.add_argument("--rank", type=int, help="This worker's rank (tcp only)")
    train.add_argument("--c", type=float, default=0.1)
    train.add_argument("--theta", type=float, help="Surrogate scale (default: workers)")
    train.add_argument("--lambda", dest="lambda_", type=float, help="Explicit proximal term")
    train.add_argument("--lambda-scale", type=float, default=1e-4)
    train.add_argument("--hash-bits", type=int, default=18)
    train.add_argument("--inner-epochs", type=int, default=10)
    train.add_argument("--outer-iters", type=int, default=100)
    train.add_argument("--inference-interval", type=int, default=1)
    train.add_argument("--seed", type=int, default=42)
    train.add_argument("--timeout", type=float, default=120.0, help="Collective timeout (s)")
    train.add_argument("--audit", action="store_true", help="Check invariants every iteration")
    train.add_argument("--rounds", type=int, default=10, help="Perceptron mixing rounds")
    train.add_argument("--epochs-per-round", type=int, default=1)
    train.add_argument("--mixing", choices=["uniform", "by-shard-size"], default="uniform")
    train.add_argument("--averaged", action="store_true", help="Averaged perceptron")
    train.add_argument("--metrics-out", help="Metrics CSV path")
    train.add_argument("--model-out", help="Model file path")

    gen = commands.add_parser("gen", help="Write a synthetic corpus")
    gen.add_argument("--task", choices=sorted(TASKS), required=True)
    gen.add_argument("--sequences", type=int, default=100)
    gen.add_argument("--length", type=int, default=8)
    gen.add_argument("--instances", type=int, default=100)
    gen.add_argument("--features", type=int, default=200)
    gen.add_argument("--labels", type=int, default=5)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--out", help="Output path (default: stdout)")

    evaluate = commands.add_parser("eval", help="Score a saved model on a corpus")
    evaluate.add_argument("--task", choices=sorted(TASKS), required=True)
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--test", required=True)
    return parser


def load_corpus(task: str, path: str, labels: Optional[List[str]] = None) -> Corpus:
    if task == "chain":
        return load_sequence_corpus(path, labels)
    return load_multiclass(path, len(labels) if labels else None)


def build_configs(args: argparse.Namespace) -> Tuple[TrainConfig, PerceptronConfig]:
    if args.transport == "tcp":
        if args.coordinator is None or args.rank is None:
            raise UsageError("--transport tcp requires --coordinator and --rank")
        if not 0 <= args.rank < args.workers:
            raise UsageError(f"--rank must lie in [0, {args.workers})")
        try:
            parse_address(args.coordinator)
        except ValueError as e:
            raise UsageError(f"--coordinator: {e}") from e
    elif args.rank is not None:
        raise UsageError("--rank is only valid with --transport tcp")
    cfg = TrainConfig(
        c=args.c,
        theta=args.theta,
        lambda_=args.lambda_,
        lambda_scale=args.lambda_scale,
        hash_bits=args.hash_bits,
        workers=args.workers,
        inner_epochs=args.inner_epochs,
        outer_iters=args.outer_iters,
        inference_interval=args.inference_interval,
        rng_seed=args.seed,
        transport=args.transport,
        comm_timeout_s=args.timeout,
        audit=args.audit,
    )
    perceptron = PerceptronConfig(
        epochs_per_round=args.epochs_per_round,
        rounds=args.rounds,
        mixing=args.mixing,
        averaged=args.averaged,
    )
    return cfg, perceptron


def run_on_cluster(
    args: argparse.Namespace, cfg: TrainConfig, body: Callable[[Cluster], T]
) -> Optional[T]:
    """Run ``body`` on every in-process worker or on this process's TCP rank; rank 0's result."""
    if cfg.transport == "inproc":
        return spawn_inproc(cfg.workers, body, cfg.comm_timeout_s)[0]
    with connect(args.coordinator, args.rank, cfg.workers, cfg.comm_timeout_s) as cluster:
        result = body(cluster)
    return result if cluster.rank == 0 else None


def run_train(args: argparse.Namespace) -> int:
    """
    Train with the selected method and write metrics and the model.

    Returns:
        Exit code
    """
    cfg, perceptron = build_configs(args)
    train_corpus = load_corpus(args.task, args.train)
    test: Sequence[TaskInstance] = ()
    labels = train_corpus.labels
    if args.test:
        test = load_corpus(args.task, args.test, labels).instances
    task: StructuredTask = TASKS[args.task](max(1, len(labels)), cfg.hash_bits)
    shards = shard_round_robin(train_corpus.instances, cfg.workers)
    logger.info(
        "Training %s on %d instances, %d labels, %d workers",
        args.method,
        len(train_corpus.instances),
        len(labels),
        cfg.workers,
    )

    def score(w: ModelVector) -> Optional[float]:
        return task.accuracy(w, test) if test else None

    with MetricsWriter(args.metrics_out) as metrics:

        def on_iteration(stats: IterationStats, w: ModelVector) -> None:
            metrics.write(
                MetricsRow(
                    method="bqo",
                    outer_iter=stats.outer_iter,
                    wall_time_s=stats.wall_time_s,
                    dual_obj=stats.dual_obj,
                    test_accuracy=score(w),
                    ws_size=stats.ws_size,
                    time_inference_s=stats.time_inference_s,
                    time_learning_s=stats.time_learning_s,
                    time_comm_s=stats.time_comm_s,
                )
            )

        def on_round(stats: RoundStats, w: ModelVector) -> None:
            metrics.write(
                MetricsRow(
                    method="perceptron",
                    outer_iter=stats.round,
                    wall_time_s=stats.wall_time_s,
                    test_accuracy=score(w),
                    time_learning_s=stats.time_learning_s,
                    time_comm_s=stats.time_comm_s,
                )
            )

        def body(cluster: Cluster) -> ModelVector:
            shard = shards[cluster.rank]
            lead = cluster.rank == 0
            if args.method == "bqo":
                return train_worker(shard, task, cfg, cluster, on_iteration if lead else None).w
            if args.method == "perceptron":
                return train_distributed_perceptron(
                    shard, task, cluster, perceptron, cfg.hash_bits, on_round if lead else None
                )
            return train_simple_average(shard, task, cluster, cfg)

        started = time.perf_counter()
        w = run_on_cluster(args, cfg, body)
        if w is None:
            return EXIT_OK
        if args.method == "average":
            metrics.write(
                MetricsRow(
                    method="average",
                    outer_iter=0,
                    wall_time_s=time.perf_counter() - started,
                    test_accuracy=score(w),
                )
            )

    if test:
        logger.info("Final test accuracy %.4f", task.accuracy(w, test))
    if args.model_out:
        save_model(w, cfg, args.model_out, labels)
    return EXIT_OK


def run_gen(args: argparse.Namespace) -> int:
    try:
        if args.task == "chain":
            corpus = generate_chain(
                args.sequences, args.length, args.labels, args.seed, noise=args.noise
            )
        else:
            rows = generate_multiclass(
                args.instances, args.features, args.labels, args.seed, noise=args.noise
            )
    except ValueError as e:
        raise UsageError(str(e)) from e

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        if args.task == "chain":
            write_chain(out, corpus)
        else:
            write_multiclass(out, rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def run_eval(args: argparse.Namespace) -> int:
    saved = load_model(args.model)
    corpus = load_corpus(args.task, args.test, saved.labels)
    task = TASKS[args.task](max(1, len(saved.labels)), saved.hash_bits)
    correct, total = task.accuracy_counts(saved.w, corpus.instances)
    accuracy = correct / total if total else 0.0
    print(f"accuracy {accuracy:.6f} ({correct}/{total})")
    return EXIT_OK


COMMANDS = {"train": run_train, "gen": run_gen, "eval": run_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line.

    Returns:
        0 on success, 1 on I/O or format errors, 2 on usage errors, 3 on cluster failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    try:
        configure_logging()
    except ValueError as e:
        print(f"bqo-struct: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError) as e:
        print(f"bqo-struct: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CollectiveError as e:
        logger.error("Cluster failure: %s", e)
        return EXIT_CLUSTER
    except (OSError, CorpusParseError, ModelFormatError) as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
