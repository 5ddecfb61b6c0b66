"""Evaluation protocols for 3D pose: MPJPE and Procrustes-aligned MPJPE.

Protocol 1 (``mpjpe``) averages per-joint Euclidean distances between
predicted and ground-truth root-relative poses.  Protocol 2 (``p_mpjpe``)
first aligns each predicted frame to its ground truth with the best
similarity transform (translation, rotation, scale), then averages the same
distances.  Alignment is the closed-form least-squares solution via SVD with
the reflection case corrected so the rotation is always proper.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateConfigurationError


def _as_frames(a, name: str) -> np.ndarray:
    """Coerce (J,3) or (T,J,3) input to float64 (T,J,3)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"{name} must have shape (T, J, 3) or (J, 3), got {a.shape}")
    return a


def mpjpe(pred, gt) -> float:
    """Mean per joint position error in mm over all frames and joints."""
    p = _as_frames(pred, "pred")
    g = _as_frames(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return float(np.mean(np.linalg.norm(p - g, axis=-1)))


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * (rotation @ x) + translation, rotation proper orthogonal."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation is not orthogonal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation


def procrustes_align(pred, gt) -> tuple[SimilarityTransform, np.ndarray]:
    """Best-fit similarity transform taking pred onto gt (least squares).

    Returns the transform minimizing sum_j ||s R pred_j + t - gt_j||^2 and
    the aligned points.  Raises DegenerateConfigurationError when either
    point set has zero centered variance (all points coincident), since the
    scale is then undefined.
    """
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected matching (J, 3) arrays, got {p.shape} and {g.shape}")
    if p.shape[0] < 3:
        raise DegenerateConfigurationError(
            f"need at least 3 points to align, got {p.shape[0]}"
        )
    mu_p = p.mean(axis=0)
    mu_g = g.mean(axis=0)
    pc = p - mu_p
    gc = g - mu_g
    var_p = np.mean(np.sum(pc**2, axis=1))
    var_g = np.mean(np.sum(gc**2, axis=1))
    if var_p < 1e-12 or var_g < 1e-12:
        raise DegenerateConfigurationError(
            "alignment undefined: a point set has zero centered variance "
            f"(pred {var_p:.3g}, gt {var_g:.3g})"
        )
    cov = (gc.T @ pc) / p.shape[0]
    u, s, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u @ vt) < 0:  # reflection case: flip smallest singular direction
        d[2] = -1.0
    rot = u @ np.diag(d) @ vt
    scale = float(np.sum(s * d) / var_p)
    if scale <= 0:
        raise DegenerateConfigurationError(
            f"alignment produced non-positive scale {scale:.3g}"
        )
    transform = SimilarityTransform(
        scale=scale, rotation=rot, translation=mu_g - scale * (rot @ mu_p)
    )
    return transform, transform.apply(p)


def p_mpjpe(pred, gt) -> float:
    """MPJPE after per-frame least-squares similarity alignment (mm)."""
    p = _as_frames(pred, "pred")
    g = _as_frames(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    total = 0.0
    for t in range(p.shape[0]):
        try:
            _, aligned = procrustes_align(p[t], g[t])
        except DegenerateConfigurationError as exc:
            raise DegenerateConfigurationError(f"frame {t}: {exc}") from exc
        total += float(np.mean(np.linalg.norm(aligned - g[t], axis=-1)))
    return total / p.shape[0]


@dataclass(frozen=True)
class EvalReport:
    """Both protocols plus per-joint and per-sequence breakdowns.

    ``protocol1_mm`` equals the plain mean of ``per_joint_p1_mm`` and the
    frame-weighted mean of the per-sequence protocol-1 values; likewise for
    protocol 2.
    """

    protocol1_mm: float
    protocol2_mm: float
    per_joint_p1_mm: tuple[float, ...]
    per_joint_p2_mm: tuple[float, ...]
    per_sequence: tuple[dict, ...] = field(default_factory=tuple)
    frame_count: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "protocol1_mm": self.protocol1_mm,
                "protocol2_mm": self.protocol2_mm,
                "frame_count": self.frame_count,
                "per_joint_p1_mm": list(self.per_joint_p1_mm),
                "per_joint_p2_mm": list(self.per_joint_p2_mm),
                "per_sequence": list(self.per_sequence),
            },
            indent=2,
        )

    def render_table(self, joint_names=None) -> str:
        """Human-readable aligned table of both protocols."""
        rows = [("", "frames", "protocol1 mm", "protocol2 mm")]
        for entry in self.per_sequence:
            rows.append(
                (
                    str(entry["name"]),
                    str(entry["frames"]),
                    f"{entry['protocol1_mm']:.2f}",
                    f"{entry['protocol2_mm']:.2f}",
                )
            )
        rows.append(
            (
                "overall",
                str(self.frame_count),
                f"{self.protocol1_mm:.2f}",
                f"{self.protocol2_mm:.2f}",
            )
        )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        if joint_names is not None:
            lines.append("")
            jw = max(len(n) for n in joint_names)
            for n, a, b in zip(joint_names, self.per_joint_p1_mm, self.per_joint_p2_mm):
                lines.append(f"{n.ljust(jw)}  {a:8.2f}  {b:8.2f}")
        return "\n".join(lines)


def make_report(preds, gts, names=None) -> EvalReport:
    """Aggregate both protocols over matched prediction/ground-truth sets.

    ``preds`` and ``gts`` are parallel lists of (T, J, 3) arrays.  Overall
    numbers are frame-weighted, i.e. identical to evaluating the flat
    concatenation of all sequences.
    """
    if len(preds) != len(gts) or not preds:
        raise ValueError(f"need matching non-empty sets, got {len(preds)} and {len(gts)}")
    if names is None:
        names = [f"seq{i}" for i in range(len(preds))]
    if len(names) != len(preds):
        raise ValueError("names must match the number of sequences")
    frames = [_as_frames(p, "pred") for p in preds]
    gframes = [_as_frames(g, "gt") for g in gts]
    num_joints = frames[0].shape[1]
    per_seq = []
    joint_d1 = np.zeros(num_joints)
    joint_d2 = np.zeros(num_joints)
    total_frames = 0
    for name, p, g in zip(names, frames, gframes):
        if p.shape != g.shape:
            raise ValueError(f"{name}: shape mismatch {p.shape} vs {g.shape}")
        if p.shape[1] != num_joints:
            raise ValueError(f"{name}: joint count changed within the set")
        d1 = np.linalg.norm(p - g, axis=-1)
        aligned = np.stack([procrustes_align(p[t], g[t])[1] for t in range(p.shape[0])])
        d2 = np.linalg.norm(aligned - g, axis=-1)
        per_seq.append(
            {
                "name": name,
                "frames": p.shape[0],
                "protocol1_mm": float(d1.mean()),
                "protocol2_mm": float(d2.mean()),
            }
        )
        joint_d1 += d1.sum(axis=0)
        joint_d2 += d2.sum(axis=0)
        total_frames += p.shape[0]
    return EvalReport(
        protocol1_mm=float(joint_d1.sum() / (total_frames * num_joints)),
        protocol2_mm=float(joint_d2.sum() / (total_frames * num_joints)),
        per_joint_p1_mm=tuple(joint_d1 / total_frames),
        per_joint_p2_mm=tuple(joint_d2 / total_frames),
        per_sequence=tuple(per_seq),
        frame_count=total_frames,
    )
