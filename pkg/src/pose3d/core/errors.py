"""Exception types shared across the package."""


class Pose3DError(Exception):
    """Base class for all errors raised by this package."""


class SchemaVersionError(Pose3DError):
    """A serialized file declares a format version we cannot read."""


class MalformedRecordError(Pose3DError):
    """A serialized file contains a record that does not parse or validate."""


class SkeletonMismatchError(Pose3DError):
    """Frame data is inconsistent with the sequence's skeleton (wrong J, ...)."""


class DegenerateConfigurationError(Pose3DError):
    """Point configuration leaves the similarity alignment undefined."""


class BehindCameraError(Pose3DError):
    """A joint has non-positive depth and cannot be projected."""
