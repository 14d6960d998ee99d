"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`NumericalError`
to exit code 3; everything else is a plain failure.
"""

from __future__ import annotations


class GVDError(Exception):
    """Base class for all errors raised by this package."""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class ConfigError(GVDError, ValueError):
    """Invalid configuration or specification value.

    ``field`` names the offending setting so callers can point at it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field

    def to_dict(self) -> dict:
        d = super().to_dict()
        if self.field is not None:
            d["field"] = self.field
        return d


class DimensionError(GVDError, ValueError):
    """Array shapes disagree."""


class PreconditionError(GVDError, ValueError):
    """An operation was called outside its domain (e.g. t = 0 for denoising)."""


class NumericalError(GVDError, ArithmeticError):
    """Factorization failure, divergence or other non-finite result."""


class TrainingError(NumericalError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["step"] = self.step
        return d


class FormatError(GVDError, ValueError):
    """Malformed dataset file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["offset"] = self.offset
        return d


class ClusteringError(GVDError, ValueError):
    pass
