"""Two-stage video 3D human pose estimation in plain numpy.

Stage one regresses per-frame 3D poses from images by taking the expectation
(soft-argmax) over softmax-normalized 3D heatmaps.  Stage two refines the
per-frame estimates with a temporal dilated residual 1D ConvNet over the 2D
pose and joint-depth sequences.  Evaluation reports mean per joint position
error before (protocol 1) and after (protocol 2) per-frame similarity
alignment.
"""

from .core import (
    BehindCameraError,
    CameraIntrinsics,
    DegenerateConfigurationError,
    Frame,
    MalformedRecordError,
    Manifest,
    NormalizationSpec,
    Pose3D,
    Pose3DError,
    PoseObservation,
    PoseSequence,
    SchemaVersionError,
    SkeletonMismatchError,
    SkeletonSpec,
    denormalize_observation,
    load_split,
    normalize_observation,
    read_manifest,
    read_sequence,
    write_manifest,
    write_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "CameraIntrinsics",
    "DegenerateConfigurationError",
    "Frame",
    "MalformedRecordError",
    "Manifest",
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
    "__version__",
]
