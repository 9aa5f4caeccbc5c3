"""Exception types raised across the package."""


class ShotmixError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(ShotmixError, ValueError):
    """A parameter is outside its valid domain (bad covariance, alpha <= 0, ...)."""


class InvalidInputError(ShotmixError, ValueError):
    """Input data violates a precondition (dimension mismatch, empty model, ...)."""


class DegenerateComponentError(ShotmixError, RuntimeError):
    """Rejection sampling exceeded its proposal budget for a component."""


class DegenerateTrajectoryError(ShotmixError, ValueError):
    """A shot trajectory has no forward motion and cannot be projected."""


class DegenerateDataError(ShotmixError, ValueError):
    """A training set is unusable (single class, no rows, ...)."""


class ConvergenceError(ShotmixError, RuntimeError):
    """An iterative fit failed to converge within its iteration cap."""


class PruneError(ShotmixError, ValueError):
    """Pruning would remove every component."""


class InsufficientSampleError(ShotmixError, ValueError):
    """Too few qualifying rows to compute a statistic."""


class ModelHashMismatchError(InvalidInputError):
    """A dependent artifact was fit against a different model."""
