"""Second-stage training: windowed sequence batches, Gaussian input-noise
augmentation, MPJPE-as-loss, checkpointing, and the ablation grid.

Training minimizes the mean per-joint Euclidean distance (mm) between
predicted and ground-truth root-relative poses, so the loss curve reads
directly as a training-set MPJPE.  Inputs are normalized observations;
targets stay in raw millimeters.  Augmentation adds i.i.d. Gaussian noise to
every input channel except the root's pinned-zero depth channel, train time
only: it models the gap between training observations and the noisier
observations seen at test time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import CameraIntrinsics, NormalizationSpec, PoseSequence, normalize_observation
from .datagen import observation_poses
from .metrics import EvalReport, make_report, mpjpe
from .stage2 import (
    INPUT_MODES,
    TemporalModel,
    TemporalModelConfig,
    build_model,
    receptive_field,
    temporal_forward,
)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AugmentationConfig:
    """Train-time Gaussian input noise in normalized units."""

    sigma: float = 0.1
    enabled: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    @property
    def active(self) -> bool:
        return self.enabled and self.sigma > 0


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters for the temporal refiner.

    ``window_length`` of None picks receptive field + 31 frames (32
    supervised output frames per window with valid convolutions), clipped to
    the shortest training sequence.
    """

    epochs: int = 80
    batch_size: int = 16
    window_length: int | None = None
    learning_rate: float = 1e-3
    lr_decay: float = 0.95
    adam_epsilon: float = 1e-8
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=lambda: AugmentationConfig(enabled=False))
    input_mode: str | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.window_length is not None and self.window_length < 1:
            raise ValueError(f"window_length must be >= 1, got {self.window_length}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if not self.adam_epsilon > 0:
            raise ValueError(f"adam_epsilon must be positive, got {self.adam_epsilon}")
        if self.input_mode is not None and self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES} or None, got {self.input_mode!r}")


def augment(inputs: np.ndarray, cfg: AugmentationConfig, rng, root_depth_channel: int | None = None):
    """Add i.i.d. Normal(0, sigma) to every channel of every frame.

    The root's depth channel (identified by index, None when the layout has
    no depth channels) is re-pinned to exactly zero.  Disabled or sigma=0
    returns the input untouched.  Never applied at evaluation time.
    """
    if not cfg.active:
        return inputs
    out = inputs + rng.normal(0.0, cfg.sigma, size=inputs.shape)
    if root_depth_channel is not None:
        out[..., root_depth_channel] = 0.0
    return out


def sequence_inputs(
    seq: PoseSequence, cam: CameraIntrinsics, norm: NormalizationSpec, input_mode: str
) -> np.ndarray:
    """Stack normalized observations into (T, C), joint-major channels.

    pose2d_depth lays out (u, v, z) per joint (C = 3J); pose2d drops the
    depth channel (C = 2J).
    """
    blocks = []
    for t, fr in enumerate(seq.frames):
        if fr.obs is None:
            raise ValueError(f"frame {t} has no observation")
        blocks.append(normalize_observation(fr.obs, cam, norm))
    arr = np.stack(blocks)
    if input_mode == "pose2d":
        arr = arr[:, :, :2]
    return arr.reshape(arr.shape[0], -1)


def sequence_targets(seq: PoseSequence) -> np.ndarray:
    """Ground-truth root-relative poses as (T, 3J) mm."""
    gt = seq.gt_array()
    return gt.reshape(gt.shape[0], -1)


def _euclidean_loss_grad(pred: np.ndarray, target: np.ndarray, joints: int):
    """Mean per-joint distance (mm) and its gradient, shapes (N, T, 3J)."""
    diff = (pred - target).reshape(pred.shape[0], pred.shape[1], joints, 3)
    dist = np.linalg.norm(diff, axis=-1)
    denom = dist.size
    grad = diff / np.maximum(dist, 1e-9)[..., None] / denom
    return float(dist.mean()), grad.reshape(pred.shape)


@dataclass(frozen=True)
class Checkpoint:
    """Best-validation weights plus everything needed to rebuild and audit.

    ``train_loss_mm`` is what the optimizer saw (minibatch average per
    epoch, train-mode batch statistics); ``train_mpjpe_mm`` is the
    deterministic post-epoch training-set MPJPE, the curve to read for
    convergence.  Both are mm.
    """

    model_config: TemporalModelConfig
    train_config: TrainConfig
    weights: bytes
    train_loss_mm: tuple[float, ...]
    train_mpjpe_mm: tuple[float, ...]
    val_mpjpe_mm: tuple[float, ...]
    best_epoch: int
    version: int = CHECKPOINT_VERSION


def model_from_checkpoint(ckpt: Checkpoint) -> TemporalModel:
    model = build_model(ckpt.model_config, seed=0)
    nn.unpack_params(ckpt.weights, model.params(), model.state())
    return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Weights as a float64 blob; configs and curves in a JSON sidecar."""
    path = str(path)
    with open(path, "wb") as f:
        f.write(ckpt.weights)
    mc, tc = ckpt.model_config, ckpt.train_config
    sidecar = {
        "format": "pose3d-checkpoint",
        "version": ckpt.version,
        "model_config": {
            "joints": mc.joints,
            "kernel_size": mc.kernel_size,
            "num_blocks": mc.num_blocks,
            "channels": mc.channels,
            "dropout_rate": mc.dropout_rate,
            "input_mode": mc.input_mode,
            "padding_mode": mc.padding_mode,
        },
        "train_config": {
            "epochs": tc.epochs,
            "batch_size": tc.batch_size,
            "window_length": tc.window_length,
            "learning_rate": tc.learning_rate,
            "lr_decay": tc.lr_decay,
            "adam_epsilon": tc.adam_epsilon,
            "seed": tc.seed,
            "augmentation": {"sigma": tc.augmentation.sigma, "enabled": tc.augmentation.enabled},
            "input_mode": tc.input_mode,
        },
        "train_loss_mm": list(ckpt.train_loss_mm),
        "train_mpjpe_mm": list(ckpt.train_mpjpe_mm),
        "val_mpjpe_mm": list(ckpt.val_mpjpe_mm),
        "best_epoch": ckpt.best_epoch,
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_checkpoint(path) -> Checkpoint:
    path = str(path)
    with open(path + ".json") as f:
        sc = json.load(f)
    if sc.get("format") != "pose3d-checkpoint" or sc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"not a version-{CHECKPOINT_VERSION} checkpoint: {path}")
    mc = TemporalModelConfig(**sc["model_config"])
    tc_raw = dict(sc["train_config"])
    tc_raw["augmentation"] = AugmentationConfig(**tc_raw["augmentation"])
    tc = TrainConfig(**tc_raw)
    with open(path, "rb") as f:
        weights = f.read()
    return Checkpoint(
        model_config=mc,
        train_config=tc,
        weights=weights,
        train_loss_mm=tuple(sc["train_loss_mm"]),
        train_mpjpe_mm=tuple(sc["train_mpjpe_mm"]),
        val_mpjpe_mm=tuple(sc["val_mpjpe_mm"]),
        best_epoch=int(sc["best_epoch"]),
    )


def _window_starts(lengths, wl, stride, rng):
    """Per-epoch window tiling with a random start offset per sequence.

    Windows step by the supervised output length, so nearly every frame is
    supervised once per epoch while offsets shift coverage between epochs.
    """
    windows = []
    for i, t_n in enumerate(lengths):
        room = t_n - wl
        offset = int(rng.integers(0, min(stride, room + 1))) if room > 0 else 0
        for s in range(offset, room + 1, stride):
            windows.append((i, s))
    return windows


def train_second_stage(
    train_seqs: list[PoseSequence],
    val_seqs: list[PoseSequence],
    cam: CameraIntrinsics,
    mcfg: TemporalModelConfig,
    tcfg: TrainConfig,
    norm: NormalizationSpec | None = None,
    verbose: bool = False,
) -> Checkpoint:
    """Train the refiner on windowed subsequences; keep best-val weights.

    Loss is the mean per-joint Euclidean distance in mm over the supervised
    (valid-convolution) output frames of each window.  Deterministic for a
    fixed config and seed on the single-threaded path.
    """
    norm = norm or NormalizationSpec()
    if tcfg.input_mode is not None and tcfg.input_mode != mcfg.input_mode:
        raise ValueError(
            f"train config input_mode {tcfg.input_mode!r} contradicts model {mcfg.input_mode!r}"
        )
    if not train_seqs or not val_seqs:
        raise ValueError("need at least one training and one validation sequence")
    for s in train_seqs + val_seqs:
        if s.num_joints != mcfg.joints:
            raise ValueError(f"sequence has {s.num_joints} joints, model expects {mcfg.joints}")

    rf = receptive_field(mcfg)
    min_len = min(len(s) for s in train_seqs)
    wl = tcfg.window_length if tcfg.window_length is not None else min(rf + 31, min_len)
    if wl < rf:
        raise ValueError(f"window_length {wl} is below the receptive field {rf}")
    if min_len < wl:
        raise ValueError(f"shortest training sequence ({min_len} frames) is below window_length {wl}")

    xs = [sequence_inputs(s, cam, norm, mcfg.input_mode) for s in train_seqs]
    ys = [sequence_targets(s) for s in train_seqs]
    root_depth_channel = (
        3 * train_seqs[0].skeleton.root_index + 2 if mcfg.input_mode == "pose2d_depth" else None
    )

    model = build_model(mcfg, seed=tcfg.seed)
    params = model.params()
    state = model.state()
    opt = nn.Adam(params, lr=tcfg.learning_rate, eps=tcfg.adam_epsilon)
    rng = np.random.default_rng(tcfg.seed)
    half = (rf - 1) // 2  # valid output t covers inputs [t, t + rf - 1]

    def train_set_mpjpe() -> float:
        # deterministic convergence read: valid-mode forward, running stats
        total, frames = 0.0, 0
        for x_full, y_full in zip(xs, ys):
            out = model.forward(x_full[None], train=False)[0] * norm.depth_scale_mm
            tgt = y_full[half : len(y_full) - half] if half else y_full
            d = np.linalg.norm(
                (out - tgt).reshape(out.shape[0], mcfg.joints, 3), axis=-1
            )
            total += d.sum()
            frames += d.size
        return total / frames

    stride = wl - rf + 1
    train_curve, train_metric_curve, val_curve = [], [], []
    best = (np.inf, -1, None)
    for epoch in range(tcfg.epochs):
        windows = _window_starts([len(s) for s in train_seqs], wl, stride, rng)
        order = rng.permutation(len(windows))
        lr = tcfg.learning_rate * tcfg.lr_decay**epoch
        epoch_loss, epoch_frames = 0.0, 0
        for start in range(0, len(order), tcfg.batch_size):
            batch = [windows[k] for k in order[start : start + tcfg.batch_size]]
            x = np.stack([xs[i][s : s + wl] for i, s in batch])
            y = np.stack([ys[i][s + half : s + wl - half] for i, s in batch])
            x = augment(x, tcfg.augmentation, rng, root_depth_channel)
            caches: list = []
            raw = model.forward(x, train=True, rng=rng, caches=caches)
            pred = raw * norm.depth_scale_mm
            loss, gpred = _euclidean_loss_grad(pred, y, mcfg.joints)
            opt.zero_grad()
            model.backward(gpred * norm.depth_scale_mm, caches)
            opt.step(lr)
            n_frames = pred.shape[0] * pred.shape[1]
            epoch_loss += loss * n_frames
            epoch_frames += n_frames
        train_curve.append(epoch_loss / max(epoch_frames, 1))
        train_metric_curve.append(train_set_mpjpe())

        val = _validation_mpjpe(model, val_seqs, cam, norm)
        val_curve.append(val)
        if val < best[0]:
            best = (val, epoch, nn.pack_params(params, state))
        if verbose:
            print(
                f"epoch {epoch + 1:3d}/{tcfg.epochs}  train {train_metric_curve[-1]:7.2f} mm"
                f"  val {val:7.2f} mm"
            )

    return Checkpoint(
        model_config=mcfg,
        train_config=tcfg,
        weights=best[2],
        train_loss_mm=tuple(train_curve),
        train_mpjpe_mm=tuple(train_metric_curve),
        val_mpjpe_mm=tuple(val_curve),
        best_epoch=best[1],
    )


def predict_sequence(
    model: TemporalModel,
    seq: PoseSequence,
    cam: CameraIntrinsics,
    norm: NormalizationSpec | None = None,
) -> np.ndarray:
    """Refined root-relative poses (T, J, 3) mm; root row pinned to zero."""
    norm = norm or NormalizationSpec()
    if seq.num_joints != model.cfg.joints:
        raise ValueError(f"sequence has {seq.num_joints} joints, model expects {model.cfg.joints}")
    x = sequence_inputs(seq, cam, norm, model.cfg.input_mode)
    out = temporal_forward(model, x, mode="infer", output_scale_mm=norm.depth_scale_mm)
    if out.shape[0] != len(seq):
        raise ValueError(
            f"model config produces {out.shape[0]} output frames for {len(seq)} inputs; "
            "use replicate_edges padding for full-sequence prediction"
        )
    pred = out.reshape(len(seq), model.cfg.joints, 3).copy()
    pred[:, seq.skeleton.root_index, :] = 0.0
    return pred


def _validation_mpjpe(model, seqs, cam, norm) -> float:
    total, frames = 0.0, 0
    for s in seqs:
        pred = predict_sequence(model, s, cam, norm)
        total += mpjpe(pred, s.gt_array()) * len(s)
        frames += len(s)
    return total / frames


def evaluate_model(
    ckpt: Checkpoint | TemporalModel,
    test_seqs: list[PoseSequence],
    cam: CameraIntrinsics,
    norm: NormalizationSpec | None = None,
    names=None,
) -> EvalReport:
    """Both protocols on refined predictions; augmentation plays no part."""
    model = model_from_checkpoint(ckpt) if isinstance(ckpt, Checkpoint) else ckpt
    preds = [predict_sequence(model, s, cam, norm) for s in test_seqs]
    gts = [s.gt_array() for s in test_seqs]
    return make_report(preds, gts, names)


def baseline_report(test_seqs: list[PoseSequence], cam: CameraIntrinsics, names=None) -> EvalReport:
    """No-refinement baseline: back-projected observations as predictions."""
    preds = [observation_poses(s, cam) for s in test_seqs]
    gts = [s.gt_array() for s in test_seqs]
    return make_report(preds, gts, names)


GRID_WB = ((1, 2), (3, 2), (3, 3), (3, 4))
GRID_ROWS = (("pose2d", 0.0), ("pose2d_depth", 0.0), ("pose2d_depth", 0.1))


@dataclass(frozen=True)
class GridResult:
    """Ablation table: rows (input mode, aug sigma) x receptive-field columns."""

    row_labels: tuple[str, ...]
    receptive_fields: tuple[int, ...]
    protocol1_mm: tuple[tuple[float, ...], ...]  # NaN marks a failed cell
    errors: tuple[tuple[str, ...], ...]  # empty string when the cell succeeded

    def render(self) -> str:
        head = ["input / receptive field"] + [str(rf) for rf in self.receptive_fields]
        rows = [head]
        for label, vals in zip(self.row_labels, self.protocol1_mm):
            rows.append([label] + [("failed" if np.isnan(v) else f"{v:.1f}") for v in vals])
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = []
        for r in rows:
            lines.append(
                "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
            )
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(
            {
                "receptive_fields": list(self.receptive_fields),
                "rows": [
                    {
                        "label": label,
                        "protocol1_mm": [None if np.isnan(v) else v for v in vals],
                        "errors": [e for e in errs],
                    }
                    for label, vals, errs in zip(self.row_labels, self.protocol1_mm, self.errors)
                ],
            },
            indent=2,
        )


def run_ablation_grid(
    train_seqs: list[PoseSequence],
    val_seqs: list[PoseSequence],
    test_seqs: list[PoseSequence],
    cam: CameraIntrinsics,
    channels: int = 64,
    dropout_rate: float = 0.25,
    tcfg: TrainConfig | None = None,
    rows=GRID_ROWS,
    wb=GRID_WB,
    norm: NormalizationSpec | None = None,
    verbose: bool = False,
) -> GridResult:
    """Train and evaluate every (input row) x (W, B) cell.

    All cells share one seed policy (the base train config's seed); a failing
    cell is recorded with its error and the grid continues.
    """
    base = tcfg or TrainConfig()
    joints = train_seqs[0].num_joints
    labels, matrix, errors = [], [], []
    for input_mode, sigma in rows:
        labels.append(f"{input_mode} (sigma={sigma})" if sigma else input_mode)
        vals, errs = [], []
        for w, b in wb:
            try:
                mcfg = TemporalModelConfig(
                    joints=joints,
                    kernel_size=w,
                    num_blocks=b,
                    channels=channels,
                    dropout_rate=dropout_rate,
                    input_mode=input_mode,
                )
                cell_cfg = TrainConfig(
                    epochs=base.epochs,
                    batch_size=base.batch_size,
                    window_length=base.window_length,
                    learning_rate=base.learning_rate,
                    lr_decay=base.lr_decay,
                    seed=base.seed,
                    augmentation=AugmentationConfig(sigma=sigma, enabled=sigma > 0),
                )
                ckpt = train_second_stage(train_seqs, val_seqs, cam, mcfg, cell_cfg, norm)
                report = evaluate_model(ckpt, test_seqs, cam, norm)
                vals.append(report.protocol1_mm)
                errs.append("")
                if verbose:
                    print(f"cell {labels[-1]} x (W={w}, B={b}): {report.protocol1_mm:.2f} mm")
            except Exception as exc:  # keep the rest of the grid alive
                vals.append(float("nan"))
                errs.append(f"{type(exc).__name__}: {exc}")
                if verbose:
                    print(f"cell {labels[-1]} x (W={w}, B={b}) failed: {exc}")
        matrix.append(tuple(vals))
        errors.append(tuple(errs))
    rfs = tuple(w ** (b + 1) for w, b in wb)
    return GridResult(
        row_labels=tuple(labels),
        receptive_fields=rfs,
        protocol1_mm=tuple(matrix),
        errors=tuple(errors),
    )
