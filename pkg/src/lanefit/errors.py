"""Exception types shared across the package."""


class LanefitError(Exception):
    """Base class for all lanefit errors."""


class HorizonError(LanefitError):
    """Pixel ray does not intersect the ground plane in front of the camera."""


class DegenerateSlopeError(LanefitError):
    """Slope correction denominator collapsed (point at/beyond the slope horizon)."""


class BehindCameraError(LanefitError):
    """Ground point projects behind the camera."""


class GenerationError(LanefitError):
    """Synthetic scene specification cannot be rendered."""


class InitializationError(LanefitError):
    """No usable initial hypothesis could be derived from the frame."""


class OptimizationError(LanefitError):
    """Objective returned a non-finite value during minimization."""


class FormatError(LanefitError):
    """Input data has the wrong shape, size, or encoding."""


class MaskReadError(LanefitError):
    """Label-map file could not be read."""
