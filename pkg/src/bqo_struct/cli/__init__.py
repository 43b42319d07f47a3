"""Command line: corpus readers, synthetic data, model files and metrics."""

from bqo_struct.cli.corpus import Corpus, load_multiclass, load_sequence_corpus, token_features
from bqo_struct.cli.main import main
from bqo_struct.cli.metrics import METRICS_HEADER, MetricsWriter, configure_logging
from bqo_struct.cli.model_file import SavedModel, load_model, save_model
from bqo_struct.cli.synthetic import generate_chain, generate_multiclass

__all__ = [
    "main",
    "Corpus",
    "load_sequence_corpus",
    "load_multiclass",
    "token_features",
    "METRICS_HEADER",
    "MetricsWriter",
    "configure_logging",
    "SavedModel",
    "save_model",
    "load_model",
    "generate_chain",
    "generate_multiclass",
]
