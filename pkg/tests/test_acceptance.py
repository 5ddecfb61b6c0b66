"""End-to-end acceptance suite.

Each test is one release gate; the terminal summary prints one PASS/FAIL
line per criterion.  Exact property checks run at tight tolerances; the
training-based checks assert directions and margins on a fixed synthetic
benchmark with frozen seeds, so every number below is reproducible.
"""

import numpy as np
import pytest

from pose3d.core import (
    DegenerateConfigurationError,
    NormalizationSpec,
    read_sequence,
    write_sequence,
)
from pose3d.datagen import (
    MotionGenConfig,
    Stage1NoiseModel,
    default_camera,
    default_skeleton,
    generate_motion,
    make_benchmark,
    project,
    render_stick_figure,
    simulate_stage1,
)
from pose3d.core.types import PoseObservation
from pose3d.metrics import mpjpe, p_mpjpe, procrustes_align
from pose3d.stage1 import (
    HeatmapGrid,
    Stage1Config,
    build_stage1,
    fit_stage1,
    soft_argmax,
    softmax_per_joint,
    stage1_forward,
    stage1_loss_grad,
)
from pose3d.stage2 import (
    TemporalModelConfig,
    build_model,
    model_gradient_check,
    receptive_field,
    temporal_forward,
)
from pose3d.training import (
    AugmentationConfig,
    TrainConfig,
    baseline_report,
    evaluate_model,
    load_checkpoint,
    model_from_checkpoint,
    predict_sequence,
    save_checkpoint,
    train_second_stage,
)


# ------------------------------------------------------------------ 1


def test_criterion_01_soft_argmax_decode():
    """Decoded coordinates equal the explicit expectation over bin centers."""
    grid = HeatmapGrid(w=8, h=8, d=4, depth_range_mm=1500.0, image_w=64, image_h=64)
    xc, yc, zc = grid.x_centers(), grid.y_centers(), grid.z_centers()

    # one-hot mass decodes to that bin's center, exactly
    hm = np.zeros((1, 4, 8, 8))
    hm[0, 1, 2, 5] = 1.0
    obs = soft_argmax(hm, grid)
    assert obs.uv[0, 0] == xc[5] and obs.uv[0, 1] == yc[2]
    assert obs.depth_mm[0] == zc[1]

    # uniform mass decodes to the exact volume center
    uniform = np.full((1, 4, 8, 8), 1.0 / 256.0)
    obs = soft_argmax(uniform, grid)
    assert abs(obs.uv[0, 0] - 32.0) <= 1e-12
    assert abs(obs.uv[0, 1] - 32.0) <= 1e-12
    assert abs(obs.depth_mm[0]) <= 1e-12

    # 100 random normalized heatmaps against a triple-loop oracle
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(50):
        probs = softmax_per_joint(rng.normal(0.0, 2.0, size=(2, 4, 8, 8)))
        obs = soft_argmax(probs, grid, tol=1e-9)
        for j in range(2):
            ex = ey = ez = 0.0
            for k in range(4):
                for iy in range(8):
                    for ix in range(8):
                        p = probs[j, k, iy, ix]
                        ex += p * xc[ix]
                        ey += p * yc[iy]
                        ez += p * zc[k]
            worst = max(
                worst,
                abs(obs.uv[j, 0] - ex),
                abs(obs.uv[j, 1] - ey),
                abs(obs.depth_mm[j] - ez),
            )
    print(f"soft-argmax worst deviation from oracle: {worst:.3e}")
    assert worst <= 1e-9


# ------------------------------------------------------------------ 2


def test_criterion_02_receptive_field():
    """Perturbation footprint equals the advertised receptive field exactly."""
    for (w, b), want in (((1, 2), 1), ((3, 2), 27), ((3, 3), 81), ((3, 4), 243)):
        cfg = TemporalModelConfig(
            joints=17,
            kernel_size=w,
            num_blocks=b,
            channels=32,
            dropout_rate=0.0,
            padding_mode="valid",
        )
        rf = receptive_field(cfg)
        assert rf == want
        model = build_model(cfg, seed=0)
        t = 2 * rf + 4
        rng = np.random.default_rng(0)
        x = rng.normal(size=(t, 51))
        y0 = temporal_forward(model, x, mode="infer")
        p = rf - 1  # interior index seen by exactly rf output rows
        x2 = x.copy()
        x2[p] += 10.0
        y1 = temporal_forward(model, x2, mode="infer")
        changed = np.flatnonzero(np.abs(y1 - y0).max(axis=1) > 0.0)
        print(f"W={w} B={b}: footprint {changed.size} (expected {want})")
        assert changed.size == rf
        assert changed[0] == 0 and changed[-1] == p  # contiguous span ending at p


# ------------------------------------------------------------------ 3


def test_criterion_03_gradient_checks():
    """Analytic gradients match central finite differences to 1e-4."""
    # decoded-coordinate loss -> heatmap logits
    grid = HeatmapGrid(w=4, h=4, d=3, depth_range_mm=1500.0, image_w=32, image_h=32)
    rng = np.random.default_rng(10)
    logits = rng.normal(size=(2, 3, 4, 4))
    target_uv = rng.uniform(0, 32, size=(2, 2))
    target_z = rng.uniform(-700, 700, size=2)
    h = 1e-6
    worst1 = 0.0
    for mode in ("full3d", "xy_only"):
        _, grad = stage1_loss_grad(logits, grid, target_uv, target_z, mode=mode)
        flat = logits.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lp, _ = stage1_loss_grad(logits, grid, target_uv, target_z, mode=mode)
            flat[i] = keep - h
            lm, _ = stage1_loss_grad(logits, grid, target_uv, target_z, mode=mode)
            flat[i] = keep
            fd = (lp - lm) / (2 * h)
            worst1 = max(worst1, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8))

    # temporal network loss -> inputs and every weight
    worst2 = 0.0
    for w, b in ((3, 1), (1, 2)):
        cfg = TemporalModelConfig(
            joints=3, kernel_size=w, num_blocks=b, channels=8, dropout_rate=0.0
        )
        worst2 = max(worst2, model_gradient_check(cfg, seed=0))

    print(f"worst relative gradient error: heatmap loss {worst1:.3e}, temporal {worst2:.3e}")
    assert worst1 <= 1e-4
    assert worst2 <= 1e-4


# ------------------------------------------------------------------ 4


def test_criterion_04_procrustes_alignment():
    """Alignment removes any similarity transform and is a global optimum."""
    rng = np.random.default_rng(4)

    # (a) similarity-transformed copies align back to ~0 error
    gt = rng.normal(0.0, 200.0, size=(100, 17, 3))
    pred = np.empty_like(gt)
    for i in range(100):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        s = float(np.exp(rng.normal(0.0, 0.3)))
        t = rng.normal(0.0, 300.0, size=3)
        pred[i] = s * gt[i] @ q.T + t
    residual = p_mpjpe(pred, gt)
    print(f"aligned residual on transformed poses: {residual:.3e} mm")
    assert residual <= 1e-6

    # (b) the closed form beats 1000 random candidate transforms, 100 times
    margin = np.inf
    for i in range(100):
        g = rng.normal(0.0, 150.0, size=(17, 3))
        p = g + rng.normal(0.0, 30.0, size=(17, 3))
        _, aligned = procrustes_align(p, g)
        closed = mpjpe(aligned, g)
        q, _ = np.linalg.qr(rng.normal(size=(1000, 3, 3)))
        det = np.linalg.det(q)
        q[det < 0, :, 0] = -q[det < 0, :, 0]
        s = np.exp(rng.normal(0.0, 0.3, size=1000))
        t = rng.normal(0.0, 50.0, size=(1000, 3))
        cand = s[:, None, None] * (p @ q.transpose(0, 2, 1)) + t[:, None, :]
        errs = np.linalg.norm(cand - g, axis=-1).mean(axis=-1)
        assert closed <= errs.min() * (1 + 1e-9)
        margin = min(margin, errs.min() - closed)
    print(f"closed form vs best of 1000 random transforms: min margin {margin:.4f} mm")

    # (c) coincident points cannot be aligned
    with pytest.raises(DegenerateConfigurationError):
        procrustes_align(np.ones((17, 3)), rng.normal(size=(17, 3)))


# ------------------------------------------------------------------ 5


def test_criterion_05_mpjpe_forced_values():
    """Identical poses give exactly zero; one 3-4-5 joint gives exactly 5/J."""
    rng = np.random.default_rng(5)
    poses = rng.normal(0.0, 100.0, size=(10, 17, 3))
    assert mpjpe(poses, poses) == 0.0

    gt = np.zeros((17, 3))
    pred = np.zeros((17, 3))
    pred[5] = (3.0, 4.0, 0.0)
    value = mpjpe(pred, gt)
    print(f"single 3-4-5 displacement: {value!r} (expected {5.0 / 17.0!r})")
    assert value == 5.0 / 17.0


# ------------------------------------------------------------------ 6


def test_criterion_06_simulator_calibration():
    """Default noise lands near 48.9 mm; injected stds match their config."""
    train, _, cam = make_benchmark(num_train=10, num_test=1, frames=300, seed=0)
    obs_mpjpe = baseline_report(train, cam).protocol1_mm
    print(f"default-noise observation error: {obs_mpjpe:.2f} mm (target 48.9 +/- 2)")
    assert abs(obs_mpjpe - 48.9) <= 2.0

    skel = default_skeleton()
    seq = generate_motion(skel, MotionGenConfig(frames=6250, seed=6))
    gt_abs = np.stack([fr.gt.coords_mm + fr.root_abs_mm for fr in seq.frames])
    exact = [project(cam, a, root_index=skel.root_index) for a in gt_abs]

    nm = Stage1NoiseModel(sigma_uv_px=4.0, sigma_depth_mm=0.0, outlier_rate=0.0, seed=1)
    sim = simulate_stage1(seq, cam, nm)
    uv_resid = np.stack([fr.obs.uv - ex.uv for fr, ex in zip(sim.frames, exact)])
    uv_std = float(uv_resid.std())
    print(f"uv residual std: {uv_std:.4f} px (configured 4.0, n={uv_resid.size})")
    assert abs(uv_std - 4.0) <= 0.08

    nm = Stage1NoiseModel(sigma_uv_px=0.0, sigma_depth_mm=40.0, outlier_rate=0.0, seed=1)
    sim = simulate_stage1(seq, cam, nm)
    z_resid = np.stack([fr.obs.depth_mm - ex.depth_mm for fr, ex in zip(sim.frames, exact)])
    z_resid = np.delete(z_resid, skel.root_index, axis=1)  # root depth is pinned
    z_std = float(z_resid.std())
    print(f"depth residual std: {z_std:.4f} mm (configured 40.0, n={z_resid.size})")
    assert z_resid.size >= 100_000
    assert abs(z_std - 40.0) <= 0.8


# ------------------------------------------------------------------ 7


def test_criterion_07_refinement_gain():
    """The trained RF-27 refiner beats raw observations by at least 10%."""
    train, test, cam = make_benchmark()  # 20 train / 5 test, 600 frames, seed 0
    mcfg = TemporalModelConfig(
        joints=17, kernel_size=3, num_blocks=2, channels=128, dropout_rate=0.1
    )
    tcfg = TrainConfig(
        epochs=30,
        batch_size=64,
        window_length=58,
        learning_rate=1e-3,
        lr_decay=0.95,
        seed=0,
    )
    ckpt = train_second_stage(train[:18], train[18:], cam, mcfg, tcfg)
    refined = evaluate_model(ckpt, test, cam).protocol1_mm
    baseline = baseline_report(test, cam).protocol1_mm
    print(f"test MPJPE: observations {baseline:.2f} mm -> refined {refined:.2f} mm "
          f"({100 * (1 - refined / baseline):.1f}% reduction)")
    assert refined <= 0.9 * baseline


# ------------------------------------------------------------------ 8


def _gap_benchmark(seed: int):
    """Benchmark with informative depth and a train->test noise gap."""
    noise_train = Stage1NoiseModel(2.0, 10.0, seed=seed)
    noise_test = Stage1NoiseModel(20.1, 31.6, seed=seed + 1)
    return make_benchmark(
        num_train=8,
        num_test=3,
        frames=300,
        seed=seed,
        noise_train=noise_train,
        noise_test=noise_test,
    )


def _median_test_mpjpe(train, test, cam, mcfg, aug, window_length):
    p1 = []
    for seed in (0, 1, 2):
        tcfg = TrainConfig(
            epochs=60,
            batch_size=16,
            window_length=window_length,
            learning_rate=1.5e-3,
            lr_decay=0.97,
            seed=seed,
            augmentation=aug,
        )
        ckpt = train_second_stage(train[:7], train[7:], cam, mcfg, tcfg)
        p1.append(evaluate_model(ckpt, test, cam).protocol1_mm)
    return float(np.median(p1)), p1


def test_criterion_08_depth_input_ablation():
    """Feeding joint depths beats uv-only input at RF 27, median of 3 seeds."""
    train, test, cam = _gap_benchmark(seed=3)
    aug = AugmentationConfig(sigma=0.04, enabled=True)
    medians = {}
    for input_mode in ("pose2d", "pose2d_depth"):
        mcfg = TemporalModelConfig(
            joints=17,
            kernel_size=3,
            num_blocks=2,
            channels=96,
            dropout_rate=0.1,
            input_mode=input_mode,
        )
        medians[input_mode], seeds = _median_test_mpjpe(train, test, cam, mcfg, aug, 34)
        print(f"{input_mode}: median {medians[input_mode]:.2f} mm, seeds "
              + ", ".join(f"{v:.2f}" for v in seeds))
    assert medians["pose2d_depth"] < medians["pose2d"]


# ------------------------------------------------------------------ 9


def test_criterion_09_augmentation_ablation():
    """Noise-matched augmentation beats none under a train->test noise gap."""
    train, test, cam = _gap_benchmark(seed=5)
    mcfg = TemporalModelConfig(
        joints=17, kernel_size=1, num_blocks=2, channels=128, dropout_rate=0.0
    )
    medians = {}
    for label, aug in (
        ("no augmentation", AugmentationConfig(sigma=0.0, enabled=False)),
        ("sigma=0.04", AugmentationConfig(sigma=0.04, enabled=True)),
    ):
        medians[label], seeds = _median_test_mpjpe(train, test, cam, mcfg, aug, 30)
        print(f"{label}: median {medians[label]:.2f} mm, seeds "
              + ", ".join(f"{v:.2f}" for v in seeds))
    assert medians["sigma=0.04"] < medians["no augmentation"]


# ------------------------------------------------------------------ 10


def test_criterion_10_noiseless_overfit():
    """One clean sequence: train MPJPE under 5 mm with a non-increasing MA-20."""
    skel = default_skeleton()
    cam = default_camera()
    seq = generate_motion(
        skel,
        MotionGenConfig(
            frames=600,
            seed=11,
            harmonics=6,
            angle_amplitude_rad=0.9,
            freq_range_hz=(0.1, 1.5),
        ),
    )
    clean = simulate_stage1(seq, cam, Stage1NoiseModel(0.0, 0.0, outlier_rate=0.0, seed=0))
    mcfg = TemporalModelConfig(
        joints=17, kernel_size=3, num_blocks=2, channels=48, dropout_rate=0.0
    )
    tcfg = TrainConfig(
        epochs=200,
        batch_size=999,  # full batch keeps the descent deterministic
        window_length=28,
        learning_rate=2.5e-3,
        lr_decay=0.985,
        seed=0,
    )
    ckpt = train_second_stage([clean], [clean], cam, mcfg, tcfg)
    final = ckpt.train_mpjpe_mm[-1]
    print(f"final train MPJPE after 200 epochs: {final:.2f} mm")
    assert final < 5.0
    for name, curve in (("loss", ckpt.train_loss_mm), ("mpjpe", ckpt.train_mpjpe_mm)):
        c = np.asarray(curve)
        ma_step = (c[20:] - c[:-20]) / 20.0  # successive MA-20 differences
        print(f"largest MA-20 step on train {name}: {ma_step.max():.3e}")
        assert np.all(ma_step <= 0.0)


# ------------------------------------------------------------------ 11


def test_criterion_11_determinism_roundtrips(tmp_path):
    """Same seed, same curves and weights; save/load is bit-exact."""
    train, test, cam = make_benchmark(num_train=3, num_test=1, frames=60, seed=7)
    mcfg = TemporalModelConfig(
        joints=17, kernel_size=3, num_blocks=1, channels=16, dropout_rate=0.1
    )
    tcfg = TrainConfig(
        epochs=4,
        batch_size=8,
        window_length=20,
        learning_rate=1e-3,
        lr_decay=0.95,
        seed=0,
        augmentation=AugmentationConfig(sigma=0.05, enabled=True),
    )
    a = train_second_stage(train[:2], train[2:], cam, mcfg, tcfg)
    b = train_second_stage(train[:2], train[2:], cam, mcfg, tcfg)
    gap = max(
        float(np.abs(np.subtract(a.train_loss_mm, b.train_loss_mm)).max()),
        float(np.abs(np.subtract(a.val_mpjpe_mm, b.val_mpjpe_mm)).max()),
    )
    print(f"rerun curve deviation: {gap:.1e}; weights identical: {a.weights == b.weights}")
    assert gap <= 1e-10
    assert a.weights == b.weights

    path = tmp_path / "model.ckpt"
    save_checkpoint(a, path)
    loaded = load_checkpoint(path)
    assert loaded.weights == a.weights
    assert loaded.train_loss_mm == a.train_loss_mm
    pred_a = predict_sequence(model_from_checkpoint(a), test[0], cam)
    pred_l = predict_sequence(model_from_checkpoint(loaded), test[0], cam)
    assert pred_a.tobytes() == pred_l.tobytes()

    seq_path = tmp_path / "roundtrip.poseseq"
    write_sequence(test[0], seq_path)
    back = read_sequence(seq_path)
    assert back.gt_array().tobytes() == test[0].gt_array().tobytes()
    for fr_a, fr_b in zip(test[0].frames, back.frames):
        assert fr_a.obs.uv.tobytes() == fr_b.obs.uv.tobytes()
        assert fr_a.obs.depth_mm.tobytes() == fr_b.obs.depth_mm.tobytes()
        assert fr_a.root_abs_mm.tobytes() == fr_b.root_abs_mm.tobytes()
    second = tmp_path / "again.poseseq"
    write_sequence(back, second)
    assert second.read_bytes() == seq_path.read_bytes()


# ------------------------------------------------------------------ 12


def test_criterion_12_stage1_overfit():
    """Conv backbone + 3-deconv head overfits 50 rendered frames to sub-bin error."""
    skel = default_skeleton()
    cam = default_camera()
    seq = generate_motion(skel, MotionGenConfig(frames=50, seed=2))
    grid = HeatmapGrid(w=16, h=16, d=8, depth_range_mm=1500.0, image_w=32, image_h=32)
    cfg = Stage1Config(
        joints=17,
        root_index=skel.root_index,
        image_h=32,
        image_w=32,
        backbone=((8, 2), (16, 2), (16, 2), (32, 2)),
        head_channels=(32, 16),
        grid=grid,
    )
    net = build_stage1(cfg, seed=0)

    images = []
    targets = []
    scale = np.array([32.0 / cam.image_w, 32.0 / cam.image_h])
    for fr in seq.frames:
        abs_pose = fr.gt.coords_mm + fr.root_abs_mm
        images.append(render_stick_figure(cam, skel, abs_pose, image_size=(32, 32)).values)
        obs = project(cam, abs_pose, root_index=skel.root_index)
        targets.append(PoseObservation(uv=obs.uv * scale, depth_mm=obs.depth_mm))
    images = np.stack(images)

    fit_stage1(net, images, targets, epochs=150, batch_size=8, lr=3e-3, lr_decay=0.99,
               mode="full3d", seed=0)

    uv_errs, z_errs = [], []
    for img, tgt in zip(images, targets):
        _, decoded = stage1_forward(net, img)
        uv_errs.append(np.linalg.norm(decoded.uv - tgt.uv, axis=-1))
        z_errs.append(np.abs(decoded.depth_mm - tgt.depth_mm))
    uv_err = float(np.mean(uv_errs))
    z_err = float(np.mean(z_errs))
    uv_bin = 32.0 / grid.w
    z_bin = grid.depth_range_mm / grid.d
    print(f"train-set decode error: uv {uv_err:.2f} px (2 bins = {2 * uv_bin:.0f} px), "
          f"depth {z_err:.1f} mm (2 bins = {2 * z_bin:.0f} mm)")
    assert uv_err < 2 * uv_bin
    assert z_err < 2 * z_bin
