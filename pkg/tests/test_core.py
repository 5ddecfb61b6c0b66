"""Core types, normalization, and on-disk round-trips."""

import json

import numpy as np
import pytest

from pose3d.core import (
    CameraIntrinsics,
    Frame,
    MalformedRecordError,
    Manifest,
    NormalizationSpec,
    Pose3D,
    PoseObservation,
    PoseSequence,
    SchemaVersionError,
    SkeletonMismatchError,
    denormalize_observation,
    load_split,
    normalize_observation,
    read_manifest,
    read_sequence,
    write_manifest,
    write_sequence,
)
from pose3d import datagen


def _obs(uv, depth):
    return PoseObservation(uv=np.asarray(uv, dtype=float), depth_mm=np.asarray(depth, dtype=float))


# ---------------------------------------------------------------- normalization


def test_normalize_center_maps_to_zero(camera):
    obs = _obs([[camera.cx, camera.cy], [camera.cx, camera.cy]], [0.0, 0.0])
    block = normalize_observation(obs, camera, NormalizationSpec())
    assert np.all(block == 0.0)


def test_normalize_edges_and_depth_scale(camera):
    # cx = image_w / 2, so u = image_w lands on +1 and u = 0 on -1
    obs = _obs([[camera.image_w, 0.0], [0.0, camera.image_h]], [750.0, -375.0])
    block = normalize_observation(obs, camera, NormalizationSpec(depth_scale_mm=750.0))
    assert block[0, 0] == 1.0 and block[0, 1] == -1.0
    assert block[1, 0] == -1.0 and block[1, 1] == 1.0
    assert block[0, 2] == 1.0 and block[1, 2] == -0.5


def test_normalize_round_trip(camera):
    rng = np.random.default_rng(0)
    spec = NormalizationSpec()
    obs = _obs(rng.uniform(0, 1000, size=(17, 2)), rng.uniform(-700, 700, size=17))
    back = denormalize_observation(normalize_observation(obs, camera, spec), camera, spec)
    assert np.abs(back.uv - obs.uv).max() <= 1e-12
    assert np.abs(back.depth_mm - obs.depth_mm).max() <= 1e-12


def test_observation_rejects_nonfinite():
    # the type itself refuses NaN, so nothing downstream ever sees one
    with pytest.raises(ValueError):
        _obs([[np.nan, 0.0], [0.0, 0.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        _obs([[0.0, 0.0], [0.0, 0.0]], [np.inf, 0.0])


def test_normalization_spec_validation():
    with pytest.raises(ValueError):
        NormalizationSpec(depth_scale_mm=0.0)
    with pytest.raises(ValueError):
        NormalizationSpec(depth_scale_mm=-1.0)


# ---------------------------------------------------------------- type contracts


def test_sequence_rejects_nonzero_gt_root(skeleton):
    coords = np.zeros((17, 3))
    coords[0, 1] = 1.0
    with pytest.raises(ValueError, match="root row"):
        PoseSequence(skeleton=skeleton, fps=50.0, frames=(Frame(gt=Pose3D(coords)),))


def test_sequence_rejects_nonzero_obs_root_depth(skeleton):
    obs = _obs(np.zeros((17, 2)), np.r_[1.0, np.zeros(16)])
    with pytest.raises(ValueError, match="root depth"):
        PoseSequence(skeleton=skeleton, fps=50.0, frames=(Frame(obs=obs),))


def test_sequence_rejects_joint_mismatch(skeleton):
    with pytest.raises(SkeletonMismatchError):
        PoseSequence(skeleton=skeleton, fps=50.0, frames=(Frame(gt=Pose3D(np.zeros((5, 3)))),))


def test_pose_root_relative():
    coords = np.arange(9.0).reshape(3, 3)
    rel = Pose3D.root_relative(coords, 1)
    assert np.all(rel.coords_mm[1] == 0.0)
    assert np.all(rel.coords_mm[0] == coords[0] - coords[1])


# ---------------------------------------------------------------- sequence files


def _two_frame_sequence(skeleton, camera, with_pred=True):
    seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=2, seed=3))
    seq = datagen.simulate_stage1(seq, camera, datagen.Stage1NoiseModel(seed=3))
    if not with_pred:
        return seq
    rng = np.random.default_rng(5)
    frames = []
    for fr in seq.frames:
        pred = fr.gt.coords_mm + rng.normal(0, 10, size=(17, 3))
        pred[0] = 0.0
        frames.append(Frame(gt=fr.gt, root_abs_mm=fr.root_abs_mm, obs=fr.obs, pred=Pose3D(pred)))
    return PoseSequence(skeleton=seq.skeleton, fps=seq.fps, frames=tuple(frames))


def test_sequence_round_trip_two_frames(skeleton, camera, tmp_path):
    seq = _two_frame_sequence(skeleton, camera)
    path = tmp_path / "two.poseseq"
    write_sequence(seq, path)
    got = read_sequence(path)
    assert got.fps == seq.fps
    assert got.skeleton == seq.skeleton
    assert len(got) == 2
    for a, b in zip(got.frames, seq.frames):
        assert a.gt.coords_mm.tobytes() == b.gt.coords_mm.tobytes()
        assert a.pred.coords_mm.tobytes() == b.pred.coords_mm.tobytes()
        assert a.root_abs_mm.tobytes() == b.root_abs_mm.tobytes()
        assert a.obs.uv.tobytes() == b.obs.uv.tobytes()
        assert a.obs.depth_mm.tobytes() == b.obs.depth_mm.tobytes()


def test_sequence_round_trip_optional_fields(skeleton, tmp_path):
    # gt-only frames survive with obs/pred still absent
    seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=3, seed=1))
    path = tmp_path / "gt_only.poseseq"
    write_sequence(seq, path)
    got = read_sequence(path)
    assert all(fr.obs is None and fr.pred is None for fr in got.frames)
    assert got.gt_array().tobytes() == seq.gt_array().tobytes()


def test_sequence_round_trip_ten_thousand_frames(skeleton, camera, tmp_path):
    seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=10_000, seed=9))
    seq = datagen.simulate_stage1(seq, camera, datagen.Stage1NoiseModel(seed=9))
    path = tmp_path / "long.poseseq"
    write_sequence(seq, path)
    got = read_sequence(path)
    assert len(got) == 10_000
    gt_a = got.gt_array()
    gt_b = seq.gt_array()
    assert gt_a.tobytes() == gt_b.tobytes()
    obs_a = np.stack([fr.obs.uv for fr in got.frames])
    obs_b = np.stack([fr.obs.uv for fr in seq.frames])
    assert obs_a.tobytes() == obs_b.tobytes()
    z_a = np.stack([fr.obs.depth_mm for fr in got.frames])
    z_b = np.stack([fr.obs.depth_mm for fr in seq.frames])
    assert z_a.tobytes() == z_b.tobytes()
    roots_a = np.stack([fr.root_abs_mm for fr in got.frames])
    roots_b = np.stack([fr.root_abs_mm for fr in seq.frames])
    assert roots_a.tobytes() == roots_b.tobytes()


def test_sequence_reader_rejects_future_version(skeleton, tmp_path):
    seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=2, seed=0))
    path = tmp_path / "v.poseseq"
    write_sequence(seq, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 99
    path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    with pytest.raises(SchemaVersionError):
        read_sequence(path)


def test_sequence_reader_rejects_garbage(tmp_path):
    path = tmp_path / "junk.poseseq"
    path.write_text("not json at all\n")
    with pytest.raises(MalformedRecordError):
        read_sequence(path)
    path.write_text('{"format":"something_else","version":1}\n')
    with pytest.raises(MalformedRecordError):
        read_sequence(path)


def test_sequence_reader_rejects_joint_mismatch(skeleton, tmp_path):
    seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=2, seed=0))
    path = tmp_path / "bad.poseseq"
    write_sequence(seq, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["gt_rel_mm"] = rec["gt_rel_mm"][:5]  # drop joints in one frame
    path.write_text("\n".join([lines[0], json.dumps(rec), lines[2]]) + "\n")
    with pytest.raises(SkeletonMismatchError):
        read_sequence(path)


# ---------------------------------------------------------------- manifests


def _write_dataset(tmp_path, skeleton, camera, n_train=2, n_test=1):
    paths = []
    for i in range(n_train + n_test):
        seq = datagen.generate_motion(skeleton, datagen.MotionGenConfig(frames=3, seed=i))
        seq = datagen.simulate_stage1(seq, camera, datagen.Stage1NoiseModel(seed=i))
        name = f"seq_{i}.poseseq"
        write_sequence(seq, tmp_path / name)
        paths.append(name)
    manifest = Manifest(
        train=tuple(paths[:n_train]), test=tuple(paths[n_train:]), camera=camera
    )
    mpath = tmp_path / "manifest.json"
    write_manifest(manifest, mpath)
    return manifest, mpath


def test_manifest_round_trip(skeleton, camera, tmp_path):
    manifest, mpath = _write_dataset(tmp_path, skeleton, camera)
    got = read_manifest(mpath)
    assert got.train == manifest.train
    assert got.test == manifest.test
    assert got.camera == camera


def test_load_split_resolves_relative_paths(skeleton, camera, tmp_path):
    manifest, mpath = _write_dataset(tmp_path, skeleton, camera)
    train = load_split(manifest, mpath, "train")
    test = load_split(manifest, mpath, "test")
    assert len(train) == 2 and len(test) == 1
    assert all(isinstance(s, PoseSequence) for s in train + test)
    with pytest.raises(ValueError):
        load_split(manifest, mpath, "validation")


def test_manifest_reader_rejects_bad_files(skeleton, camera, tmp_path):
    _, mpath = _write_dataset(tmp_path, skeleton, camera)
    doc = json.loads(mpath.read_text())
    doc["version"] = 42
    bad = tmp_path / "bad_version.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        read_manifest(bad)
    junk = tmp_path / "junk.json"
    junk.write_text("[1, 2, 3]")
    with pytest.raises(MalformedRecordError):
        read_manifest(junk)


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0, image_w=10, image_h=10)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=1.0, fy=1.0, cx=0.0, cy=0.0, image_w=0, image_h=10)
