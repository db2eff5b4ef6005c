"""Exception types shared across the package."""


class SiltError(Exception):
    """Base class for all library errors."""


class DegenerateInterval(SiltError):
    """Both interval endpoints snapped to the same grid node."""


class DependentIncrements(SiltError):
    """Orthonormalization dropped an increment that was required to be independent."""


class SingularOperator(SiltError):
    """Operator is not invertible on the grid space (smallest singular value below tolerance)."""


class InvalidSpec(SiltError):
    """Operator specification violates its own constraints."""


class UnsupportedSpec(SiltError):
    """Operation not defined for this operator kind."""


class NonpositiveEps(SiltError):
    """Smoothing bandwidth must be strictly positive."""


class EmptySimplex(SiltError):
    """The separated simplex contains no quadrature cells at this resolution."""


class FactorizationFailure(SiltError):
    """Covariance clamping changed eigenvalues beyond tolerance."""


class SingularGram(SiltError):
    """Gram determinant at or below the singularity floor."""


class KernelIndicator(SiltError):
    """Interval indicator lies in the operator kernel; the integrand is undefined there."""


class NotAKernelIndicator(SiltError):
    """The scan center is not a kernel indicator of the operator."""


class DegenerateDifference(SiltError):
    """The two indicators coincide, so their normalized difference is undefined."""


class ConditionsViolated(SiltError):
    """Operator fails the finite-kernel / invertible-complement conditions."""


class ConfigError(SiltError):
    """Invalid experiment configuration."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"config field '{field}': {message}")
