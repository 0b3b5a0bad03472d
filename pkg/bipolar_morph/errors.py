"""Exception types raised across the package.

Each class also derives from the built-in the rest of the code would
otherwise raise, so callers catching ``ValueError`` keep working.
"""

from typing import Any


class BMError(Exception):
    """Base class for all package errors."""


class ShapeError(BMError, ValueError):
    """Operand shapes do not conform."""


class DomainError(BMError, ValueError):
    """Value outside an operation's domain (log of a negative, non-finite weight)."""


class ParseError(BMError, ValueError):
    """Malformed architecture notation."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ConversionError(BMError, ValueError):
    """Layer cannot be converted to its BM counterpart."""


class DataError(BMError, ValueError):
    """Malformed dataset or model file."""

    def __init__(self, message: str, path: Any = None, offset: int | None = None):
        details = message
        if path is not None:
            details += f" [{path}]"
        if offset is not None:
            details += f" (at byte offset {offset})"
        super().__init__(details)
        self.path = path
        self.offset = offset


class NumericError(BMError, ArithmeticError):
    """Numeric failure localized to a layer and coordinate."""

    def __init__(
        self, message: str, layer: str | None = None, coordinate: tuple[int, ...] | None = None
    ):
        where = ""
        if layer is not None:
            where += f" in layer '{layer}'"
        if coordinate is not None:
            where += f" at {coordinate}"
        super().__init__(message + where)
        self.layer = layer
        self.coordinate = coordinate


class SaturationError(NumericError):
    """Too many max-plus outputs were clamped at the exponent overflow threshold."""


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch
