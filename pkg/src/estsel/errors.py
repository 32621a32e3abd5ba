"""Exception hierarchy shared across the package.

Three broad failure classes map onto distinct CLI exit codes: bad
configuration (2), bad data (3), and numerical failure (4).  Library code
raises the most specific subclass available so callers can distinguish,
e.g., a separated propensity fit from a singular design.
"""

from __future__ import annotations


class EstselError(Exception):
    """Base class for all package errors."""


class ConfigError(EstselError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(EstselError):
    """Malformed or unusable input data (CLI exit code 3)."""


class NumericalError(EstselError):
    """A numerical procedure failed to produce a usable result (exit code 4)."""


class SeparationError(NumericalError):
    """Perfect or quasi-perfect separation in a logistic propensity fit.

    Carries the (unit-norm) coefficient direction along which the fit
    diverged so callers can name the offending covariates.
    """

    def __init__(self, message: str, direction=None, worst_column: str | None = None):
        super().__init__(message)
        self.direction = direction
        self.worst_column = worst_column


class SingularDesignError(NumericalError):
    """Rank-deficient design matrix in a propensity fit."""
