"""Exception hierarchy. Everything raised deliberately by the package derives
from :class:`GazeLiftError` so the CLI can map it to a nonzero exit code."""


class GazeLiftError(Exception):
    pass


class DegenerateGaze(GazeLiftError, ValueError):
    """Gaze joint coincides with the eye midpoint."""


class InvalidDistance(GazeLiftError, ValueError):
    pass


class MissingEyes(GazeLiftError, ValueError):
    pass


class DegenerateProjection(GazeLiftError, ValueError):
    """Direction is parallel to the camera axis, so it has no image-plane angle."""


class ShapeMismatch(GazeLiftError, ValueError):
    pass


class InvalidT(GazeLiftError, ValueError):
    pass


class TimestepOutOfRange(GazeLiftError, IndexError):
    pass


class TimestepOrder(GazeLiftError, ValueError):
    pass


class MissingGroundTruth(GazeLiftError, ValueError):
    pass


class TooManyObjects(GazeLiftError, ValueError):
    pass


class IOFailure(GazeLiftError, OSError):
    pass


class CorruptFile(GazeLiftError, ValueError):
    pass


class VersionMismatch(GazeLiftError, ValueError):
    pass


class NonFiniteLoss(GazeLiftError, FloatingPointError):
    pass


class DegenerateMean(GazeLiftError, ValueError):
    pass


class DegenerateEyes(GazeLiftError, ValueError):
    pass
