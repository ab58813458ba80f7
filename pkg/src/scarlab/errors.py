"""Exception types shared across the package."""


class ScarlabError(Exception):
    """Base class for all package-specific errors."""


class NoOrbitError(ScarlabError):
    """Raised when no bound radial motion exists for the given (E, L)."""


class NotPeriodicError(ScarlabError):
    """Raised when an initial condition fails to close on itself."""


class GridResolutionError(ScarlabError):
    """Raised when a grid is too coarse to resolve the requested physics."""


class ConvergenceError(ScarlabError):
    """Raised when an iterative solver exhausts its budget.

    Carries the number of states that did converge, so callers can salvage
    partial results.
    """

    def __init__(self, message, converged=0):
        super().__init__(message)
        self.converged = converged
