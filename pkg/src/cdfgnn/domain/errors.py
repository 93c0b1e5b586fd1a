"""Exception hierarchy shared by all layers.

Every error carries the process exit code the CLI maps it to.
"""

from __future__ import annotations

from typing import Any


class CdfgnnError(Exception):
    """Base class for all simulator errors."""

    exit_code: int = 4


class UsageError(CdfgnnError):
    """Raised on invalid arguments (empty graph, out-of-range parameters)."""

    exit_code = 2


class DataError(CdfgnnError):
    """Raised when input data or an artifact on disk is invalid."""

    exit_code = 3


class EdgeListParseError(DataError):
    """Raised when an edge-list line cannot be parsed."""

    def __init__(self, line_number: int, line: str) -> None:
        """
        Initialize parse error.

        Args:
            line_number: 1-based line number in the source file
            line: Offending line content
        """
        self.line_number = line_number
        self.line = line
        super().__init__(f"line {line_number}: cannot parse {line!r}")


class VertexBoundsError(DataError):
    """Raised when an edge endpoint is outside the declared vertex range."""


class SelfLoopError(DataError):
    """Raised when an edge list contains a self-loop."""


class FeatureFileError(DataError):
    """Raised on a malformed feature binary file."""


class LabelFileError(DataError):
    """Raised on a malformed label/mask file."""


class PlanIntegrityError(DataError):
    """Raised when a stored partition plan is missing, truncated or inconsistent."""


class SchemaMismatchError(DataError):
    """Raised when two metrics files cannot be compared."""


class NonFiniteValueError(DataError):
    """Raised when a payload or matrix contains NaN or infinity."""


class LabelOutOfRangeError(DataError):
    """Raised when a contributing vertex has a label >= num_classes."""


class ShapeMismatchError(DataError):
    """Raised when matrix operands do not conform."""


class ProtocolError(CdfgnnError):
    """Raised when the message protocol between workers is violated."""

    exit_code = 4

    def __init__(self, message: str, **context: Any) -> None:
        """
        Initialize protocol error.

        Args:
            message: Human-readable description
            **context: Worker, epoch, layer and other routing context
        """
        self.context = context
        details = ", ".join(f"{key}={value}" for key, value in sorted(context.items()))
        super().__init__(f"{message} ({details})" if details else message)


class UnknownVertexError(ProtocolError):
    """Raised when a message targets a vertex the receiver does not host in that role."""


class BarrierTimeoutError(ProtocolError):
    """Raised when a worker waits on a barrier longer than the deadlock guard allows."""


class MissingContributionError(ProtocolError):
    """Raised when the parameter server does not receive one gradient per worker."""


class CodeIntegrityError(ProtocolError):
    """Raised when a quantized code does not fit in its declared bit width."""


class NonFiniteLossError(ProtocolError):
    """Raised when a loss evaluation returns NaN or infinity."""
