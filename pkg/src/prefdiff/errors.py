"""
Error types and result formatting for prefdiff.

Every failure raised by the library derives from PrefDiffError so the CLI can turn it
into a single machine-parsable line. The formatting helpers mirror the ones used for
command output: successes carry an optional bracketed message, errors are prefixed
with ``Error:``.
"""

from __future__ import annotations

from collections.abc import Sequence


class PrefDiffError(Exception):
    """Base class for all prefdiff failures."""

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ShapeError(PrefDiffError):
    """Raised when operand shapes are incompatible for an operation."""

    def __init__(self, op: str, shapes: Sequence[tuple[int, ...]], detail: str = ""):
        shape_text = ", ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {shape_text}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = [tuple(s) for s in shapes]


class NonFiniteError(PrefDiffError):
    """Raised when a NaN or Inf value appears where finite values are required."""

    def __init__(self, where: str, index: int | None = None):
        message = f"non-finite value in {where}"
        if index is not None:
            message += f" at parameter index {index}"
        super().__init__(message)
        self.where = where
        self.index = index


class GraphError(PrefDiffError):
    """Raised for invalid use of the computation record (e.g. non-scalar backward)."""


class ScheduleError(PrefDiffError):
    """Raised for invalid noise-schedule bounds or out-of-range timesteps."""


class ConfigError(PrefDiffError):
    """Raised for invalid configuration values or unknown keys."""

    def __init__(self, message: str, keys: Sequence[str] = ()):
        super().__init__(message)
        self.keys = list(keys)


class ConfigMigrationError(ConfigError):
    """Raised when a persisted config or record was written with another schema version."""

    def __init__(self, found: int, expected: int, source: str = "config"):
        super().__init__(
            f"{source} schema_version {found} is not supported (expected {expected}); "
            "regenerate the file with this version of prefdiff",
            keys=["schema_version"],
        )
        self.found = found
        self.expected = expected


class InvalidConditionError(PrefDiffError):
    """Raised when a condition is outside the task's condition space."""


class ConditionKindMismatch(PrefDiffError):
    """Raised when winning and losing conditions are of different kinds."""


class DatasetMismatchError(PrefDiffError):
    """Raised when a dataset does not match the requested method or is not homogeneous."""


class TrainingDivergedError(PrefDiffError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class InsufficientDrawsError(PrefDiffError):
    """Raised when a Monte Carlo estimate is requested with too few draws."""

    def __init__(self, requested: int, minimum: int):
        super().__init__(f"n_draws={requested} is below the minimum of {minimum}")
        self.requested = requested
        self.minimum = minimum


class DegenerateFactorError(PrefDiffError):
    """Raised when a synthetic deviation generator has zero variance."""


class CheckpointFormatError(PrefDiffError):
    """Raised when a checkpoint file is malformed or has an unknown version."""


def format_success(output: str, message: str = "") -> str:
    """
    Format a successful result.

    Args:
        output: The main output content
        message: Optional explanatory message

    Returns:
        Formatted string
    """
    if not output and not message:
        return "Operation completed successfully."

    if not message:
        return output

    if not output:
        return message

    return f"{output}\n\n[{message}]"


def format_error(message: str) -> str:
    """Format an error message."""
    return f"Error: {message}"


def format_exception(exc: BaseException) -> str:
    """
    Render an exception as one machine-parsable line.

    The line has the form ``Error: <ClassName>: <message>`` with newlines collapsed.
    """
    text = exc.message if isinstance(exc, PrefDiffError) else str(exc)
    text = " ".join(text.split())
    return format_error(f"{type(exc).__name__}: {text}")
