"""Exception hierarchy for GroPLE.

Library code raises these; the CLI turns them into a nonzero exit and the
tool server into ``{"error": ..., "status": ...}`` payloads.
"""

from typing import Optional


class GropleError(Exception):
    """Base class for every error raised by this package."""
    pass


class ConfigError(GropleError):
    """Raised when an experiment config is unreadable or fails validation."""
    pass


class PreconditionError(GropleError, ValueError):
    """Raised when an argument violates an operation's precondition."""
    pass


class DimensionError(PreconditionError):
    """Raised when matrix shapes do not conform."""
    pass


# Dataset -----------------------------------------------------------------


class DatasetError(GropleError):
    """Raised when a dataset file or cache cannot be read."""
    pass


class ArffParseError(DatasetError):
    """Raised for malformed ARFF input. ``line`` is 1-based, or None if unknown."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = source or "<arff>"
        if line is not None and line > 0:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


class LabelHeaderError(GropleError):
    """Raised when the XML label header is not well-formed."""
    pass


class EmptyLabelHeaderError(LabelHeaderError):
    """Raised when the label header names no labels."""
    pass


class DuplicateLabelError(LabelHeaderError):
    """Raised when the label header names the same label twice."""
    pass


class MissingLabelError(GropleError):
    """Raised when a header label is not an attribute of the data table."""
    pass


class NonBinaryLabelError(GropleError):
    """Raised when a label attribute is not a {0,1} or {-1,1} nominal."""
    pass


class InvalidFoldCountError(PreconditionError):
    """Raised when k < 2 or k > n."""
    pass


# Grouping ----------------------------------------------------------------


class TooFewLabelsError(PreconditionError):
    """Raised when fewer than two labels are given to the affinity."""
    pass


class DisconnectedLabelError(GropleError):
    """Raised when an affinity row sums to zero."""
    pass


# Solvers -----------------------------------------------------------------


class NumericalFailureError(GropleError):
    """Raised on NaN/Inf iterates or eigensolver failure."""
    pass


class SingularUpdateError(GropleError):
    """Raised when VV^T is singular and lam1 = 0."""
    pass


class DegenerateBasisError(GropleError):
    """Raised when the basis U is zero (Lipschitz constant 0)."""
    pass


class InsufficientDataError(PreconditionError):
    """Raised when a correlation needs more rows than given."""
    pass


# Metrics -----------------------------------------------------------------


class IncompleteTableError(GropleError):
    """Raised when a score table has missing cells."""
    pass


class DegenerateStatisticError(GropleError):
    """Raised when the Iman-Davenport denominator vanishes."""
    pass


# Persistence -------------------------------------------------------------


class InvalidModelError(GropleError):
    """Raised when a model file is malformed or lacks a required part."""
    pass


class ReportSchemaError(GropleError):
    """Raised when a report document does not validate against its schema."""
    pass
