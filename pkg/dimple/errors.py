"""Exception types raised by the dimple package.

Every error derives from ``ValueError`` so callers that only care about
"bad input" can keep catching that, while the pipeline can tell a degenerate
sample (rank deficiency) from a broken configuration.
"""
from __future__ import annotations


class DimpleError(ValueError):
    """Base class for all dimple errors."""


class DimensionError(DimpleError):
    """Shapes or indices do not match what an operation requires."""


class NotOrthonormalError(DimpleError):
    """A factor that must have orthonormal columns does not."""


class RankDeficiencyError(DimpleError):
    """A truncated SVD was asked for more directions than the input carries."""


class InfeasibleModelError(DimpleError):
    """A model configuration produces connection probabilities outside [-1, 1]."""


class SingularCovarianceError(DimpleError):
    """A group's latent positions have singular sample covariance."""


class IndeterminateThresholdError(DimpleError):
    """The score matrix carries no separation to threshold on."""


class RegularizationError(DimpleError):
    """Row-norm regularization cannot meet its two-to-infinity bound."""


class FormatError(DimpleError):
    """A file does not follow the expected on-disk format."""


class ConfigError(DimpleError):
    """An experiment or algorithm configuration is invalid."""


class NumericalError(DimpleError):
    """A computed result violates a bound it must satisfy in exact arithmetic."""
