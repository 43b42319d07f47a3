"""Structured tasks: the task contract plus multiclass and linear-chain implementations."""

from bqo_struct.tasks.base import FeatureBag, StructuredTask, TaskInstance
from bqo_struct.tasks.chain import ChainTask
from bqo_struct.tasks.multiclass import MulticlassTask

TASKS = {"multiclass": MulticlassTask, "chain": ChainTask}

__all__ = [
    "FeatureBag",
    "TaskInstance",
    "StructuredTask",
    "MulticlassTask",
    "ChainTask",
    "TASKS",
]
