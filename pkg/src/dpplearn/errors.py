"""Exception taxonomy shared by all modules.

Two top-level families map onto the CLI exit codes: ``InputError`` (bad
arguments, malformed files, violated preconditions; exit 2) and
``NumericError`` (conditioning failures, non-PSD matrices, objective
blow-ups; exit 3).
"""


class DppLearnError(Exception):
    """Base class for all library errors."""


class InputError(DppLearnError, ValueError):
    """Invalid argument, precondition violation, or malformed input data."""


class ParseError(InputError):
    """Malformed file content, with optional line/field context."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        parts = []
        if path is not None:
            parts.append(str(path))
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class VersionError(ParseError):
    """File declares a format version this reader does not understand."""


class NumericError(DppLearnError, ArithmeticError):
    """Numerical failure: non-convergence, overflow, loss of definiteness."""


class ConditioningError(NumericError):
    """A factorization or solve failed because the matrix is too close to
    singular. ``detail`` carries the offending pivot index or the smallest
    eigenvalue estimate when known."""

    def __init__(self, message, detail=None):
        self.detail = detail
        super().__init__(message)


class NotPsdError(NumericError):
    """A matrix required to be positive semi-definite has a significantly
    negative eigenvalue."""


class EvaluationError(NumericError):
    """The objective is undefined (+inf) at the requested point, e.g. a
    principal submatrix that must be positive definite is not."""


class AccuracyWarning(UserWarning):
    """A self-consistency refinement check did not meet its target."""
