"""Exception types shared across the package."""


class AmrAwareError(Exception):
    """Base class for all errors raised by this package."""


class InvalidRotationError(AmrAwareError):
    """Matrix is not a proper rotation (non-orthonormal or det -1)."""


class BehindCameraError(AmrAwareError):
    """A point has non-positive depth and cannot be projected."""


class DegenerateSkeletonError(AmrAwareError):
    """Skeleton lacks the keypoints needed for metric rescaling."""


class DegenerateHeadError(AmrAwareError):
    """Head keypoints are missing or collapse to a degenerate configuration."""


class DegenerateInitError(AmrAwareError):
    """Pose initialization is impossible (e.g. ears project to one pixel)."""


class NumericalFailureError(AmrAwareError):
    """The optimizer violated its own descent guarantee; indicates a bug."""


class NotInFrontError(AmrAwareError):
    """Cone radius requested at a non-positive axial distance."""


class SchemaError(AmrAwareError):
    """Malformed frame line, scenario file, or config document."""


class VersionError(AmrAwareError):
    """Input document carries an unsupported schema version."""


class AlignmentError(AmrAwareError):
    """Estimate and ground-truth records do not cover the same frames."""
