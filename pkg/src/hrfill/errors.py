"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1 (handled by the
argument parser), DataError exits 2, NumericError exits 3.
"""


class HrfillError(Exception):
    """Base class for all hrfill errors."""


class DataError(HrfillError):
    """Input data is unreadable, malformed, or insufficient for the operation."""


class NumericError(HrfillError):
    """A numeric procedure failed (singular system, non-convergence, ...)."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
