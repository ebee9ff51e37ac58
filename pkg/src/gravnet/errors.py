"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes, so keep the hierarchy flat.
"""


class GravnetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(GravnetError, ValueError):
    """Input violates a documented precondition or invariant."""

    exit_code = 2


class CollinearityError(ValidationError):
    """Design matrix columns are (numerically) collinear after absorbing fixed effects."""

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        if message is None:
            message = "collinear after absorbing fixed effects: " + ", ".join(self.columns)
        super().__init__(message)


class UndefinedCorrelationError(ValidationError):
    """Correlation requested for a measure with zero variance."""


class DegenerateModelError(GravnetError):
    """Estimation cannot proceed, e.g. every observation was dropped."""

    exit_code = 3
