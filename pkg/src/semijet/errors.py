"""Exception hierarchy shared across the solver modules."""


class SemijetError(Exception):
    """Base class for all library errors."""


class UsageError(SemijetError):
    """Bad arguments or configuration (CLI exit code 2)."""


class NumericalFailure(SemijetError):
    """A run failed numerically (CLI exit code 3)."""


class SolverError(NumericalFailure):
    """Linear solver did not converge within the iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InterfaceLost(NumericalFailure):
    """The level set no longer changes sign anywhere."""
