"""Structured errors raised across the package.

Every error carries a stable machine-readable ``code``, a message and an
optional location (file path, line number, sample id) so the CLI can emit
them as JSON.
"""

from __future__ import annotations

from typing import Any


class GapError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str, **location: Any) -> None:
        super().__init__(message)
        self.message = message
        self.location = {k: v for k, v in location.items() if v is not None}

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.location:
            out["location"] = dict(self.location)
        return out

    def __str__(self) -> str:
        if not self.location:
            return self.message
        where = ", ".join(f"{k}={v}" for k, v in self.location.items())
        return f"{self.message} ({where})"


class DimensionMismatchError(GapError):
    code = "dimension-mismatch"


class NonFiniteError(GapError):
    code = "non-finite"


class TooFewLabelsError(GapError):
    code = "too-few-labels"


class EmptyInputError(GapError):
    code = "empty-input"


class LengthMismatchError(GapError):
    code = "length-mismatch"


class ParseError(GapError):
    code = "parse-error"


class DuplicateIdError(GapError):
    code = "duplicate-id"


class InfeasibleSpacingError(GapError):
    code = "infeasible-spacing"


class InvalidArgumentError(GapError):
    code = "invalid-argument"


class UsageError(GapError):
    code = "usage"
