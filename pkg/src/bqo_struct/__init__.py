"""
bqo-struct - Distributed training of L2-loss structured SVMs.

This package provides:
- Block-coordinate dual optimization with allreduce synchronization
- Loss-augmented inference for multiclass and linear-chain tasks
- Feature hashing for consistent models across workers
- In-process and TCP collective backends
- Distributed perceptron and model-averaging baselines
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
