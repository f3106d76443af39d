"""Exception hierarchy.

Each top-level class maps to one CLI exit code so batch callers can tell
an unreadable file from a bad flag from an estimator that could not run.
"""

from __future__ import annotations


class RditError(Exception):
    exit_code = 1


class IngestError(RditError):
    exit_code = 3


class SchemaError(IngestError):
    """A required column is missing from the CSV header."""

    def __init__(self, column: str, header: list[str] | None = None) -> None:
        self.column = column
        msg = f"missing required column {column!r}"
        if header is not None:
            msg += f" (header has: {', '.join(header)})"
        super().__init__(msg)


class RowError(IngestError):
    """A data row failed validation."""

    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyCorpusError(IngestError):
    pass


class ConfigError(RditError):
    exit_code = 4


class EstimationError(RditError):
    exit_code = 5


class SingularDesignError(EstimationError):
    def __init__(self, columns: list[int], message: str | None = None) -> None:
        self.columns = columns
        super().__init__(message or f"design matrix is rank deficient; collinear columns {columns}")


class EmptyWindowError(EstimationError):
    pass


class ThinWindowError(EstimationError):
    """Too few observations with positive weight on one side of the cutoff."""

    def __init__(self, message: str, n_left: int | None = None, n_right: int | None = None) -> None:
        self.n_left = n_left
        self.n_right = n_right
        super().__init__(message)


class ZeroVarianceError(EstimationError):
    pass


class MissingOutcomeError(EstimationError):
    pass


class JoinError(EstimationError):
    def __init__(self, missing: list[str]) -> None:
        self.missing = missing
        super().__init__(f"custom series has no value for months: {', '.join(missing)}")


class DonorPoolError(EstimationError):
    pass


class GroupingError(EstimationError):
    pass


class CheckFailure(RditError):
    exit_code = 6


class ThinSampleError(EstimationError):
    """The series is too short for the requested segmentation."""
