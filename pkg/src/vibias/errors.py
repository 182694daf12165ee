"""Exception hierarchy shared across the package."""


class VibiasError(Exception):
    """Base class for all package errors."""


class AllMassZero(VibiasError):
    """Every node of a grid measure carries zero mass."""


class UnsupportedPair(VibiasError):
    """The functional cannot be evaluated against this measure type."""


class SupportMismatch(VibiasError):
    """q places mass where p has none; KL is infinite."""


class AxesMismatch(VibiasError):
    """Grid operands do not live on identical axes."""


class EmptyBlock(VibiasError):
    """A coordinate block is empty."""


class InvalidBlockStructure(VibiasError):
    """Blocks do not partition the coordinate set."""


class NotProductMeasure(VibiasError):
    """The measure does not factorize across the requested blocks."""


class NonPositiveDefinite(VibiasError):
    """A covariance matrix is not symmetric positive-definite."""


class NotNormalized(VibiasError):
    """Operation requires a normalized measure."""


class NoProgress(VibiasError):
    """Coordinate ascent increased the KL objective; defect in the update."""


class RepresentationMismatch(VibiasError):
    """Fit and posterior use different measure representations."""


class NotConverged(VibiasError):
    """Operation requires a converged fit."""


class BlockOverlap(VibiasError):
    """Two single-block functionals share coordinates."""


class ZeroVector(VibiasError):
    """A contrast vector is identically zero."""


class DimensionMismatch(VibiasError):
    """Functional and measure dimensions disagree."""


class ZeroVariance(VibiasError):
    """The functional is almost-surely constant under q*."""


class ShapeMismatch(VibiasError):
    """Matrix shapes are incompatible."""


class NotPolynomial(VibiasError):
    """Operation is defined for polynomial functionals only."""


class NotBlockAdditive(VibiasError):
    """The functional has a nonzero interaction component."""


class ConfigError(VibiasError):
    """Malformed configuration input."""
