"""Observation normalization: pixels/mm <-> network input units."""

from __future__ import annotations

import numpy as np

from .types import CameraIntrinsics, NormalizationSpec, PoseObservation


def normalize_observation(
    obs: PoseObservation, cam: CameraIntrinsics, spec: NormalizationSpec
) -> np.ndarray:
    """Map an observation to normalized (J, 3) columns [u, v, depth].

    u, v are centered on the principal point and divided by half the image
    width/height; depth is divided by ``spec.depth_scale_mm``.  Inverse of
    :func:`denormalize_observation` to ~1e-16 relative.
    """
    if not (np.all(np.isfinite(obs.uv)) and np.all(np.isfinite(obs.depth_mm))):
        raise ValueError("normalize_observation: observation contains non-finite values")
    un = (obs.uv[:, 0] - cam.cx) / (cam.image_w / 2.0)
    vn = (obs.uv[:, 1] - cam.cy) / (cam.image_h / 2.0)
    zn = obs.depth_mm / spec.depth_scale_mm
    return np.stack([un, vn, zn], axis=1)


def denormalize_observation(
    block: np.ndarray, cam: CameraIntrinsics, spec: NormalizationSpec
) -> PoseObservation:
    """Inverse of :func:`normalize_observation`."""
    block = np.asarray(block, dtype=np.float64)
    if block.ndim != 2 or block.shape[1] != 3:
        raise ValueError(f"expected (J, 3) normalized block, got {block.shape}")
    u = block[:, 0] * (cam.image_w / 2.0) + cam.cx
    v = block[:, 1] * (cam.image_h / 2.0) + cam.cy
    depth = block[:, 2] * spec.depth_scale_mm
    return PoseObservation(uv=np.stack([u, v], axis=1), depth_mm=depth)
