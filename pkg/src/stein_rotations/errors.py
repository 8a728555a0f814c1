"""Exception types raised across the package."""


class SteinRotationsError(Exception):
    """Base class for all package errors."""


class DimensionError(SteinRotationsError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class NotARotationError(SteinRotationsError, ValueError):
    """A matrix failed orthogonality or determinant validation."""


class AntipodalError(SteinRotationsError, ValueError):
    """The principal logarithm is not unique (rotation angle too close to pi)."""


class TangencyError(SteinRotationsError, ValueError):
    """A score function returned a matrix that is not tangent at its base point."""


class EmptyInputError(SteinRotationsError, ValueError):
    """Too few samples for the requested statistic."""


class SingularSystemError(SteinRotationsError, ArithmeticError):
    """A linear system could not be solved even in the least-squares sense."""


class InsufficientDrawsError(SteinRotationsError, ValueError):
    """Too few Monte Carlo draws requested for a quantile estimate."""


class EnvelopeTooLooseError(SteinRotationsError, RuntimeError):
    """Rejection sampler acceptance rate is too small to be practical."""
