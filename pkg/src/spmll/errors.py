"""Exception types shared across the toolkit."""

from __future__ import annotations


class SpmllError(Exception):
    """Base class for toolkit errors."""


class InvalidInputError(SpmllError, ValueError):
    """Bad data fed to a pure computation (zero-norm vector, index out of range, ...)."""


class ShapeError(SpmllError, ValueError):
    """Array dimensions do not line up."""


class DegenerateRowError(SpmllError, ValueError):
    """A graph row has no positive off-diagonal mass to normalize."""

    def __init__(self, class_id: int, message: str | None = None):
        self.class_id = class_id
        super().__init__(message or f"row for class {class_id} has no positive off-diagonal entries")


class NumericDegeneracyError(SpmllError, ValueError):
    """A computation hit a numerically meaningless input (e.g. zero-norm embedding)."""


class ValidationError(SpmllError, ValueError):
    """A file or in-memory structure violates its documented invariants.

    ``line_no`` is 1-based when the violation is tied to a specific file line.
    """

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ParseError(ValidationError):
    """A file could not be parsed at all (malformed JSON, truncated content)."""


class StateError(SpmllError, RuntimeError):
    """An operation was invoked on an object in the wrong state."""


class MissingForwardCacheError(StateError):
    """backward() was called before forward() populated the intermediate cache."""


class TrainingDivergedError(SpmllError, RuntimeError):
    """Loss became non-finite during training; carries a diagnostic snapshot."""

    def __init__(self, message: str, epoch: int, batch: int, param_norms: dict[str, float]):
        self.epoch = epoch
        self.batch = batch
        self.param_norms = param_norms
        super().__init__(message)
