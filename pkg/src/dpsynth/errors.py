"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DPSynthError(Exception):
    """Base class for all package errors."""


class ParameterError(DPSynthError):
    """Invalid parameter or precondition violation."""


class DataError(DPSynthError):
    """Malformed input data or schema mismatch."""


class BudgetError(DPSynthError):
    """Privacy budget exhausted.

    Carries the shortfall: how much the rejected charge exceeds the
    remaining budget.
    """

    def __init__(self, message: str, shortfall: float = 0.0):
        super().__init__(message)
        self.shortfall = shortfall


class OptimizationError(DPSynthError):
    """Non-finite loss or gradient during projection.

    Carries the per-temperature trace collected so far for diagnosis.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
