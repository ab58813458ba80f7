"""scarlab: perturbation-induced quantum scarring in 2D potential wells.

Natural units (hbar = 1, mass = 1) throughout.
"""

__version__ = "0.1.0"

from .errors import (ConvergenceError, GridResolutionError, NoOrbitError,
                     NotPeriodicError, ScarlabError)

__all__ = [
    "__version__",
    "ScarlabError", "NoOrbitError", "NotPeriodicError",
    "GridResolutionError", "ConvergenceError",
]
