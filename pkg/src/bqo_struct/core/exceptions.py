"""Custom exceptions for bqo-struct."""

from typing import Optional


class BqoStructError(Exception):
    """Base exception for bqo-struct."""


class StructureError(BqoStructError):
    """Raised when a structure is infeasible for an instance or families do not match."""


class EnumerationLimitError(StructureError):
    """Raised when exhaustive enumeration would exceed the explosion guard."""


class ConsistencyError(BqoStructError):
    """Raised when an audit finds the primal and dual states out of sync."""


class CollectiveError(BqoStructError):
    """Raised when a collective operation fails on any participant."""


class WireFormatError(BqoStructError):
    """Raised when a transport frame cannot be encoded or decoded."""


class ModelFormatError(BqoStructError):
    """Raised when a model file is malformed, truncated or of another version."""


class CorpusParseError(BqoStructError):
    """Raised when a corpus file cannot be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
