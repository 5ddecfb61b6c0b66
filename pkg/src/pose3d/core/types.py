"""Domain types for the two-stage video pose pipeline.

All coordinates are camera-frame millimeters unless a field name says
otherwise (``uv`` is image pixels).  Poses are root-relative: the root
joint's row (or depth entry) is identically zero.  Every type is immutable
after construction; array fields are stored as read-only float64 copies
so instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SkeletonMismatchError


def _frozen_array(a, shape=None, name="array") -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    if shape is not None and out.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name}: contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint names, parent tree and bone lengths.

    ``parents[j]`` is the parent joint index of joint ``j``; the root's
    parent is the sentinel ``-1``.  ``bone_lengths_mm`` has one entry per
    non-root joint, ordered by ascending joint index.
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]
    root_index: int
    bone_lengths_mm: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(str(n) for n in self.joint_names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "bone_lengths_mm", tuple(float(x) for x in self.bone_lengths_mm))
        j = len(self.joint_names)
        if j < 2:
            raise ValueError(f"skeleton needs at least 2 joints, got {j}")
        if len(self.parents) != j:
            raise ValueError("parents length does not match joint count")
        if not 0 <= self.root_index < j:
            raise ValueError(f"root_index {self.root_index} out of range")
        if self.parents[self.root_index] != -1:
            raise ValueError("root joint's parent must be the sentinel -1")
        if sum(1 for p in self.parents if p == -1) != 1:
            raise ValueError("exactly one joint may have parent -1")
        for jj, p in enumerate(self.parents):
            if jj == self.root_index:
                continue
            if not 0 <= p < j:
                raise ValueError(f"joint {jj}: parent index {p} out of range")
            # walk to the root; more than J steps means a cycle
            steps, k = 0, jj
            while k != self.root_index:
                k = self.parents[k]
                steps += 1
                if steps > j:
                    raise ValueError(f"parent graph contains a cycle through joint {jj}")
        if len(self.bone_lengths_mm) != j - 1:
            raise ValueError(f"expected {j - 1} bone lengths, got {len(self.bone_lengths_mm)}")
        if any(b <= 0 for b in self.bone_lengths_mm):
            raise ValueError("bone lengths must be positive")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def non_root_joints(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.num_joints) if j != self.root_index)

    def bone_length_of(self, joint: int) -> float:
        """Length of the bone connecting ``joint`` to its parent (mm)."""
        if joint == self.root_index:
            raise ValueError("root joint has no bone")
        return self.bone_lengths_mm[self.non_root_joints.index(joint)]


@dataclass(frozen=True)
class Pose3D:
    """Root-relative camera-space joint coordinates, (J, 3) mm."""

    coords_mm: np.ndarray

    def __post_init__(self):
        a = _frozen_array(self.coords_mm, name="coords_mm")
        if a.ndim != 2 or a.shape[1] != 3:
            raise ValueError(f"coords_mm must be (J, 3), got {a.shape}")
        object.__setattr__(self, "coords_mm", a)

    @property
    def num_joints(self) -> int:
        return self.coords_mm.shape[0]

    @classmethod
    def root_relative(cls, coords_mm, root_index: int) -> "Pose3D":
        """Build from absolute (or offset) coordinates by subtracting the root row."""
        a = np.asarray(coords_mm, dtype=np.float64)
        rel = a - a[root_index]
        rel[root_index] = 0.0
        return cls(rel)


@dataclass(frozen=True)
class PoseObservation:
    """Per-joint image coordinates and root-relative depth.

    ``uv`` is (J, 2) pixels, ``depth_mm`` is (J,) camera depth relative to
    the root joint (the root's entry is zero by convention).
    """

    uv: np.ndarray
    depth_mm: np.ndarray

    def __post_init__(self):
        uv = _frozen_array(self.uv, name="uv")
        if uv.ndim != 2 or uv.shape[1] != 2:
            raise ValueError(f"uv must be (J, 2), got {uv.shape}")
        d = _frozen_array(self.depth_mm, name="depth_mm")
        if d.shape != (uv.shape[0],):
            raise ValueError(f"depth_mm must be ({uv.shape[0]},), got {d.shape}")
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "depth_mm", d)

    @property
    def num_joints(self) -> int:
        return self.uv.shape[0]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_w: int
    image_h: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "image_w", int(self.image_w))
        object.__setattr__(self, "image_h", int(self.image_h))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.image_w < 1 or self.image_h < 1:
            raise ValueError("image dimensions must be >= 1 pixel")
        if not all(np.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise ValueError("intrinsics must be finite")


@dataclass(frozen=True)
class NormalizationSpec:
    """How observations map to network input units.

    u, v are centered on the principal point and scaled by half the image
    extent (so a centered principal point maps the image onto [-1, 1]);
    depth is divided by ``depth_scale_mm``.  The default depth scale is
    half the 1500 mm depth range of the first-stage heatmap grid.
    """

    depth_scale_mm: float = 750.0

    def __post_init__(self):
        object.__setattr__(self, "depth_scale_mm", float(self.depth_scale_mm))
        if not (self.depth_scale_mm > 0 and np.isfinite(self.depth_scale_mm)):
            raise ValueError("depth_scale_mm must be a positive finite number")


@dataclass(frozen=True)
class Frame:
    """One time step of a sequence; every field is optional."""

    gt: Pose3D | None = None
    root_abs_mm: np.ndarray | None = None
    obs: PoseObservation | None = None
    pred: Pose3D | None = None

    def __post_init__(self):
        if self.root_abs_mm is not None:
            object.__setattr__(
                self, "root_abs_mm", _frozen_array(self.root_abs_mm, (3,), "root_abs_mm")
            )


@dataclass(frozen=True)
class PoseSequence:
    """A skeleton plus T frames of (optional) ground truth / observations."""

    skeleton: SkeletonSpec
    fps: float
    frames: tuple[Frame, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "frames", tuple(self.frames))
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValueError("fps must be positive and finite")
        if len(self.frames) < 1:
            raise ValueError("a sequence needs at least one frame")
        j = self.skeleton.num_joints
        root = self.skeleton.root_index
        for t, fr in enumerate(self.frames):
            for pose, label in ((fr.gt, "gt"), (fr.pred, "pred")):
                if pose is None:
                    continue
                if pose.num_joints != j:
                    raise SkeletonMismatchError(
                        f"frame {t}: {label} has {pose.num_joints} joints, skeleton has {j}"
                    )
                if np.any(pose.coords_mm[root] != 0.0):
                    raise ValueError(f"frame {t}: {label} root row must be exactly zero")
            if fr.obs is not None:
                if fr.obs.num_joints != j:
                    raise SkeletonMismatchError(
                        f"frame {t}: obs has {fr.obs.num_joints} joints, skeleton has {j}"
                    )
                if fr.obs.depth_mm[root] != 0.0:
                    raise ValueError(f"frame {t}: obs root depth must be exactly zero")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def num_joints(self) -> int:
        return self.skeleton.num_joints

    def gt_array(self) -> np.ndarray:
        """Stack ground-truth poses into (T, J, 3); raises if any frame lacks gt."""
        missing = [t for t, fr in enumerate(self.frames) if fr.gt is None]
        if missing:
            raise ValueError(f"frames without ground truth: {missing[:5]}...")
        return np.stack([fr.gt.coords_mm for fr in self.frames])
