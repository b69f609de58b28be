"""Exception hierarchy shared by the estimators and the command line."""

from __future__ import annotations


class GDPPanelError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidInputError(GDPPanelError, ValueError):
    """Malformed or non-finite numeric input."""

    exit_code = 2


class ParseError(InvalidInputError):
    """A data file could not be parsed.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number in the offending file.
    """

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientUsersError(GDPPanelError):
    """Too few users for the trimmed mean to have a usable lower bound.

    ``n_required`` is the smallest user count for which the lower-bound
    threshold exceeds one at the requested settings; ``n_min`` is the advisory
    sample-size threshold with unit constants.
    """

    exit_code = 3

    def __init__(self, n: int, n_required: int, n_min: float):
        self.n = n
        self.n_required = n_required
        self.n_min = n_min
        super().__init__(
            f"insufficient users: n={n}, need at least {n_required} for a "
            f"non-vacuous user lower bound (advisory n_min={n_min:.2f})"
        )


class DegenerateCovarianceError(GDPPanelError):
    """Covariance is undefined or identically zero."""

    exit_code = 4


class InvalidRestrictionError(InvalidInputError):
    """Restriction matrix of a Wald test is not of full row rank."""
