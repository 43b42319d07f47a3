"""Core module for bqo-struct - shared types, schemas, hashing and dual algebra."""

from bqo_struct.core.dual import (
    DualState,
    InstanceState,
    StructureKey,
    WorkingSetEntry,
    dual_gradient_entry,
    dual_objective,
    primal_objective,
    reconstruct_w,
)
from bqo_struct.core.exceptions import (
    BqoStructError,
    CollectiveError,
    ConsistencyError,
    CorpusParseError,
    EnumerationLimitError,
    ModelFormatError,
    StructureError,
    WireFormatError,
)
from bqo_struct.core.hashing import FeatureKey, fnv1a_64, hash_feature
from bqo_struct.core.schemas import (
    IterationStats,
    LineSearchScalars,
    MetricsRow,
    PerceptronConfig,
    TrainConfig,
)
from bqo_struct.core.sparse import ModelVector, SparseVec, zero_model

__all__ = [
    # Schemas
    "TrainConfig",
    "PerceptronConfig",
    "IterationStats",
    "MetricsRow",
    "LineSearchScalars",
    # Types
    "SparseVec",
    "ModelVector",
    "StructureKey",
    "WorkingSetEntry",
    "InstanceState",
    "DualState",
    "FeatureKey",
    # Functions
    "zero_model",
    "fnv1a_64",
    "hash_feature",
    "dual_objective",
    "dual_gradient_entry",
    "primal_objective",
    "reconstruct_w",
    # Exceptions
    "BqoStructError",
    "StructureError",
    "EnumerationLimitError",
    "ConsistencyError",
    "CollectiveError",
    "WireFormatError",
    "ModelFormatError",
    "CorpusParseError",
]
