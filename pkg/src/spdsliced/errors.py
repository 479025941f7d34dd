"""Exception types shared across the package."""


class SpdSlicedError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(SpdSlicedError):
    """A matrix expected to be positive definite has an eigenvalue at or below tolerance."""


class DimensionMismatch(SpdSlicedError):
    """Operands do not share a common matrix dimension."""


class NotUnitNorm(SpdSlicedError):
    """A slicing direction does not have unit Frobenius norm."""


class DegenerateDirection(SpdSlicedError):
    """A slicing direction has (near-)repeated eigenvalues, so the sorted
    eigenbasis needed by the horospherical coordinate is ill defined."""


class DegenerateSample(SpdSlicedError):
    """A random SPD sample failed the positive-definiteness check twice."""


class EmptyMeasure(SpdSlicedError):
    """An empirical measure with no support points was supplied."""


class InstanceTooLarge(SpdSlicedError):
    """An exact transport instance exceeds the configured size cap."""


class NotConverged(SpdSlicedError):
    """An iterative solver stopped at max iterations above its threshold."""


class IllConditioned(SpdSlicedError):
    """A linear system is too ill conditioned to solve reliably."""


class BasisMismatch(SpdSlicedError):
    """Quantile features built from different projection bases or grids."""


class SizeMismatch(SpdSlicedError):
    """Gram matrices of different sizes cannot be combined."""


class MissingLabels(SpdSlicedError):
    """Evaluation was requested on a dataset without labels."""


class SingularFeatures(UserWarning):
    """A constant feature column was dropped before classifier training."""


class DataValidationError(SpdSlicedError):
    """A dataset or manifest file failed schema or numeric validation."""
