"""On-disk formats: "poseseq v1" sequence files and dataset manifests.

Both formats are line-delimited / plain JSON with float values emitted via
Python's shortest round-trip repr, so serialization is bit-exact for every
finite float64.  A poseseq file is one header record followed by one record
per frame:

    {"format":"poseseq","version":1,"skeleton":{...},"fps":...,"count":T}
    {"t":0,"root_abs_mm":[...]|null,"gt_rel_mm":[[...]xJ]|null,
     "obs":[[u,v,zrel]xJ]|null,"pred":[[...]xJ]|null}

The optional "pred" entry carries refined predictions and is omitted when a
frame has none.  A manifest is a single JSON object:

    {"format":"posemanifest","version":1,"train":[paths],"test":[paths],
     "camera":{fx,fy,cx,cy,image_w,image_h}}

Paths are stored relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import MalformedRecordError, SchemaVersionError
from .types import CameraIntrinsics, Frame, Pose3D, PoseObservation, PoseSequence, SkeletonSpec

POSESEQ_FORMAT = "poseseq"
MANIFEST_FORMAT = "posemanifest"
FORMAT_VERSION = 1


def _grid(a: np.ndarray) -> list[list[float]]:
    return [[float(x) for x in row] for row in a]


def write_sequence(seq: PoseSequence, path: str | os.PathLike) -> None:
    """Write a sequence as poseseq v1.  Lossless for all populated fields."""
    sk = seq.skeleton
    header = {
        "format": POSESEQ_FORMAT,
        "version": FORMAT_VERSION,
        "skeleton": {
            "joint_names": list(sk.joint_names),
            "parents": list(sk.parents),
            "root_index": sk.root_index,
            "bone_lengths_mm": [float(b) for b in sk.bone_lengths_mm],
        },
        "fps": float(seq.fps),
        "count": len(seq),
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for t, fr in enumerate(seq.frames):
            rec = {
                "t": t,
                "root_abs_mm": None if fr.root_abs_mm is None else [float(x) for x in fr.root_abs_mm],
                "gt_rel_mm": None if fr.gt is None else _grid(fr.gt.coords_mm),
                "obs": None
                if fr.obs is None
                else _grid(np.concatenate([fr.obs.uv, fr.obs.depth_mm[:, None]], axis=1)),
            }
            if fr.pred is not None:
                rec["pred"] = _grid(fr.pred.coords_mm)
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _parse_pose(rows, what: str, t: int) -> Pose3D:
    try:
        return Pose3D(np.asarray(rows, dtype=np.float64))
    except (TypeError, ValueError) as e:
        raise MalformedRecordError(f"frame {t}: bad {what}: {e}") from e


def read_sequence(path: str | os.PathLike) -> PoseSequence:
    """Read a poseseq v1 file written by :func:`write_sequence`."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise MalformedRecordError(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise MalformedRecordError(f"{path}: header is not valid JSON: {e}") from e
    if not isinstance(header, dict) or header.get("format") != POSESEQ_FORMAT:
        raise MalformedRecordError(f"{path}: not a poseseq file")
    if header.get("version") != FORMAT_VERSION:
        raise SchemaVersionError(
            f"{path}: poseseq version {header.get('version')!r}, reader supports {FORMAT_VERSION}"
        )
    try:
        sk = header["skeleton"]
        skeleton = SkeletonSpec(
            joint_names=sk["joint_names"],
            parents=sk["parents"],
            root_index=sk["root_index"],
            bone_lengths_mm=sk["bone_lengths_mm"],
        )
        fps = header["fps"]
        count = int(header["count"])
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecordError(f"{path}: bad header: {e}") from e
    if count != len(lines) - 1:
        raise MalformedRecordError(
            f"{path}: header count {count} but {len(lines) - 1} frame records"
        )
    frames = []
    for t, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecordError(f"{path}: frame {t}: invalid JSON: {e}") from e
        if not isinstance(rec, dict) or rec.get("t") != t:
            raise MalformedRecordError(f"{path}: frame {t}: missing or out-of-order 't'")
        gt = None if rec.get("gt_rel_mm") is None else _parse_pose(rec["gt_rel_mm"], "gt_rel_mm", t)
        pred = None if rec.get("pred") is None else _parse_pose(rec["pred"], "pred", t)
        obs = None
        if rec.get("obs") is not None:
            arr = np.asarray(rec["obs"], dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise MalformedRecordError(f"{path}: frame {t}: obs rows must be [u,v,zrel]")
            obs = PoseObservation(uv=arr[:, :2], depth_mm=arr[:, 2])
        frames.append(
            Frame(gt=gt, root_abs_mm=rec.get("root_abs_mm"), obs=obs, pred=pred)
        )
    return PoseSequence(skeleton=skeleton, fps=fps, frames=tuple(frames))


@dataclass(frozen=True)
class Manifest:
    """Dataset manifest: sequence paths (relative to the manifest) + camera."""

    train: tuple[str, ...]
    test: tuple[str, ...]
    camera: CameraIntrinsics

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(str(p) for p in self.train))
        object.__setattr__(self, "test", tuple(str(p) for p in self.test))


def write_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    cam = manifest.camera
    doc = {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "train": list(manifest.train),
        "test": list(manifest.test),
        "camera": {
            "fx": cam.fx,
            "fy": cam.fy,
            "cx": cam.cx,
            "cy": cam.cy,
            "image_w": cam.image_w,
            "image_h": cam.image_h,
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(doc, separators=(",", ":")) + "\n")


def read_manifest(path: str | os.PathLike) -> Manifest:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedRecordError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise MalformedRecordError(f"{path}: not a posemanifest file")
    if doc.get("version") != FORMAT_VERSION:
        raise SchemaVersionError(
            f"{path}: manifest version {doc.get('version')!r}, reader supports {FORMAT_VERSION}"
        )
    try:
        cam = CameraIntrinsics(**doc["camera"])
        return Manifest(train=doc["train"], test=doc["test"], camera=cam)
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedRecordError(f"{path}: bad manifest fields: {e}") from e


def load_split(manifest: Manifest, manifest_path: str | os.PathLike, split: str) -> list[PoseSequence]:
    """Read all sequences of a manifest split ("train" or "test")."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    base = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))
    return [read_sequence(os.path.join(base, rel)) for rel in getattr(manifest, split)]
