"""Metrics CSV sink and logging setup for the command line."""

import csv
import logging
import os
from pathlib import Path
from typing import IO, Any, List, Optional, Union

from bqo_struct.core.schemas import MetricsRow

METRICS_HEADER = [
    "method",
    "outer_iter",
    "wall_time_s",
    "dual_obj",
    "test_accuracy",
    "ws_size",
    "time_inference_s",
    "time_learning_s",
    "time_comm_s",
]

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the package logger from ``level`` or the BQO_LOG variable (default info)."""
    name = (level or os.environ.get("BQO_LOG") or "info").strip().lower()
    if name not in LOG_LEVELS:
        raise ValueError(f"BQO_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logger = logging.getLogger("bqo_struct")
    logger.setLevel(LOG_LEVELS[name])
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricsWriter:
    """Append MetricsRow records to a CSV file with the fixed header."""

    def __init__(self, path: Union[str, Path, None]):
        self.path = path
        self.rows: List[MetricsRow] = []
        self._handle: Optional[IO[str]] = None
        self._writer: Optional[Any] = None
        if path is not None:
            self._handle = open(path, "w", newline="", encoding="utf-8")
            self._writer = csv.writer(self._handle)
            self._writer.writerow(METRICS_HEADER)

    def write(self, row: MetricsRow) -> None:
        self.rows.append(row)
        if self._writer is not None and self._handle is not None:
            record = row.model_dump()
            self._writer.writerow([_cell(record[column]) for column in METRICS_HEADER])
            self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None
            self._writer = None

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
