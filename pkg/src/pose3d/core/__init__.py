"""Core domain types, camera/normalization model, and on-disk formats."""

from .errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    MalformedRecordError,
    Pose3DError,
    SchemaVersionError,
    SkeletonMismatchError,
)
from .normalize import denormalize_observation, normalize_observation
from .seqio import (
    Manifest,
    load_split,
    read_manifest,
    read_sequence,
    write_manifest,
    write_sequence,
)
from .types import (
    CameraIntrinsics,
    Frame,
    NormalizationSpec,
    Pose3D,
    PoseObservation,
    PoseSequence,
    SkeletonSpec,
)

__all__ = [
    "BehindCameraError",
    "CameraIntrinsics",
    "DegenerateConfigurationError",
    "Frame",
    "Manifest",
    "MalformedRecordError",
    "NormalizationSpec",
    "Pose3D",
    "Pose3DError",
    "PoseObservation",
    "PoseSequence",
    "SchemaVersionError",
    "SkeletonMismatchError",
    "SkeletonSpec",
    "denormalize_observation",
    "load_split",
    "normalize_observation",
    "read_manifest",
    "read_sequence",
    "write_manifest",
    "write_sequence",
]
