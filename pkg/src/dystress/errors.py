"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
NumericError -> 2, OSError -> 3.
"""


class DystressError(Exception):
    """Base class for all package errors."""


class ValidationError(DystressError, ValueError):
    """Bad user input: configs, out-of-domain arguments, malformed files."""


class DegenerateInputError(ValidationError):
    """Input is numerically degenerate (e.g. a near-zero vector to normalize)."""


class BatchTooSmallError(ValidationError):
    """Batch has fewer than 2 samples; the contrastive loss is degenerate."""


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(DystressError, ArithmeticError):
    """Non-finite values or overflow encountered during computation."""
