"""Command-line interface: synth, simulate, train, eval, refine, grid, plot.

Every subcommand is deterministic given its flags and --seed (default taken
from the POSE3D_SEED environment variable), prints its resolved configuration,
and writes files rather than opening windows.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import datagen, training
from .core import (
    BehindCameraError,
    DegenerateConfigurationError,
    Manifest,
    Pose3D,
    Pose3DError,
    PoseSequence,
    Frame,
    load_split,
    read_manifest,
    read_sequence,
    write_manifest,
    write_sequence,
)
from .metrics import make_report
from .stage2 import TemporalModelConfig, receptive_field
from .training import (
    AugmentationConfig,
    TrainConfig,
    evaluate_model,
    load_checkpoint,
    model_from_checkpoint,
    predict_sequence,
    run_ablation_grid,
    save_checkpoint,
    train_second_stage,
)

_INPUT_MODES = {"2d": "pose2d", "2d+depth": "pose2d_depth"}
_WB_CHOICES = ("1,2", "3,2", "3,3", "3,4")


def _default_seed() -> int:
    raw = os.environ.get("POSE3D_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        return 0


def _print_config(args: argparse.Namespace) -> None:
    skip = {"func", "command"}
    pairs = [f"{k}={v!r}" for k, v in sorted(vars(args).items()) if k not in skip]
    print(f"{args.command} config: " + " ".join(pairs))
    if hasattr(args, "seed"):
        print(f"seed: {args.seed}")


def _write_dataset(out_dir, train, test, cam) -> str:
    os.makedirs(out_dir, exist_ok=True)
    names = {"train": [], "test": []}
    for split, seqs in (("train", train), ("test", test)):
        offset = 0 if split == "train" else len(train)
        for i, seq in enumerate(seqs):
            name = f"seq_{offset + i:03d}.poseseq"
            write_sequence(seq, os.path.join(out_dir, name))
            names[split].append(name)
    mpath = os.path.join(out_dir, "manifest.json")
    write_manifest(Manifest(train=names["train"], test=names["test"], camera=cam), mpath)
    return mpath


def _load_all(manifest_path):
    m = read_manifest(manifest_path)
    train = load_split(m, manifest_path, "train")
    test = load_split(m, manifest_path, "test")
    return m, train, test


def _cmd_synth(args) -> int:
    _print_config(args)
    if args.test >= args.sequences:
        raise ValueError(
            f"--test must leave at least one training sequence ({args.test} >= {args.sequences})"
        )
    cfg = datagen.MotionGenConfig(
        frames=args.frames,
        fps=args.fps,
        harmonics=args.harmonics,
        angle_amplitude_rad=args.amplitude,
        seed=args.seed,
    )
    seqs = datagen.generate_dataset(datagen.default_skeleton(), args.sequences, cfg)
    split = args.sequences - args.test
    mpath = _write_dataset(args.out, seqs[:split], seqs[split:], datagen.default_camera())
    print(f"wrote {args.sequences} sequences ({split} train, {args.test} test) to {args.out}")
    print(f"manifest: {mpath}")
    return 0


def _cmd_simulate(args) -> int:
    _print_config(args)
    m, train, test = _load_all(args.data)
    nm = datagen.Stage1NoiseModel(
        sigma_uv_px=args.sigma_uv,
        sigma_depth_mm=args.sigma_depth,
        outlier_rate=args.outlier_rate,
        outlier_scale=args.outlier_scale,
        rho=args.rho,
        seed=args.seed,
    )
    noisy_train = [datagen.simulate_stage1(s, m.camera, nm, stream=i) for i, s in enumerate(train)]
    noisy_test = [
        datagen.simulate_stage1(s, m.camera, nm, stream=len(train) + i)
        for i, s in enumerate(test)
    ]
    mpath = _write_dataset(args.out, noisy_train, noisy_test, m.camera)
    print(f"simulated observations for {len(train)} train + {len(test)} test sequences")
    print(f"manifest: {mpath}")
    return 0


def _model_train_configs(args):
    w, b = (int(p) for p in args.wb.split(","))
    mcfg = TemporalModelConfig(
        joints=args.joints,
        kernel_size=w,
        num_blocks=b,
        channels=args.channels,
        dropout_rate=args.dropout,
        input_mode=_INPUT_MODES[args.input_mode],
    )
    tcfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        window_length=args.window_length,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        seed=args.seed,
        augmentation=AugmentationConfig(sigma=args.sigma, enabled=args.sigma > 0),
    )
    return mcfg, tcfg


def _cmd_train(args) -> int:
    _print_config(args)
    m, train, _ = _load_all(args.data)
    if not train:
        raise ValueError(f"{args.data}: manifest has no training sequences")
    mcfg, tcfg = _model_train_configs(args)
    print(f"receptive field: {receptive_field(mcfg)}")
    if tcfg.augmentation.active:
        print(f"augmentation: sigma={tcfg.augmentation.sigma}")
    else:
        print("augmentation: disabled (sigma=0)")
    n_val = min(max(1, len(train) // 10), len(train) - 1) if len(train) > 1 else 0
    val = train[len(train) - n_val:] if n_val else train
    fit = train[: len(train) - n_val] if n_val else train
    print(f"sequences: {len(fit)} train, {len(val)} val")
    ckpt = train_second_stage(fit, val, m.camera, mcfg, tcfg, verbose=args.verbose)
    save_checkpoint(ckpt, args.out)
    print(f"final train loss: {ckpt.train_loss_mm[-1]:.4f} mm")
    print(f"best val MPJPE: {min(ckpt.val_mpjpe_mm):.4f} mm (epoch {ckpt.best_epoch})")
    print(f"checkpoint: {args.out}")
    return 0


def _stored_pred_report(seqs, names):
    preds, gts = [], []
    for i, seq in enumerate(seqs):
        for t, fr in enumerate(seq.frames):
            if fr.pred is None:
                raise ValueError(
                    f"sequence {i} frame {t} has no stored prediction; pass --ckpt or run refine"
                )
            if fr.gt is None:
                raise ValueError(f"sequence {i} frame {t} has no ground truth to score against")
        preds.append(np.stack([fr.pred.coords_mm for fr in seq.frames]))
        gts.append(np.stack([fr.gt.coords_mm for fr in seq.frames]))
    return make_report(preds, gts, names=names)


def _cmd_eval(args) -> int:
    _print_config(args)
    m, train, test = _load_all(args.data)
    seqs = test if args.split == "test" else train
    if not seqs:
        raise ValueError(f"{args.data}: manifest has no {args.split} sequences")
    names = [f"{args.split}[{i}]" for i in range(len(seqs))]
    if args.ckpt:
        report = evaluate_model(load_checkpoint(args.ckpt), seqs, m.camera, names=names)
    else:
        report = _stored_pred_report(seqs, names)
    print(f"protocol1: {report.protocol1_mm:.2f} mm, protocol2: {report.protocol2_mm:.2f} mm")
    print(report.render_table(joint_names=seqs[0].skeleton.joint_names))
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.to_json())
            f.write("\n")
        print(f"report: {args.out}")
    return 0


def _cmd_refine(args) -> int:
    _print_config(args)
    m, train, test = _load_all(args.data)
    ckpt = load_checkpoint(args.ckpt)
    model = model_from_checkpoint(ckpt)

    def refined(seq: PoseSequence) -> PoseSequence:
        pred = predict_sequence(model, seq, m.camera)
        frames = [
            Frame(gt=fr.gt, root_abs_mm=fr.root_abs_mm, obs=fr.obs, pred=Pose3D(pred[t]))
            for t, fr in enumerate(seq.frames)
        ]
        return PoseSequence(skeleton=seq.skeleton, fps=seq.fps, frames=frames)

    out_train = [refined(s) for s in train]
    out_test = [refined(s) for s in test]
    mpath = _write_dataset(args.out, out_train, out_test, m.camera)
    print(f"refined {len(train)} train + {len(test)} test sequences")
    print(f"manifest: {mpath}")
    return 0


def _cmd_grid(args) -> int:
    _print_config(args)
    m, train, test = _load_all(args.data)
    if len(train) < 2:
        raise ValueError("grid needs at least 2 training sequences (one is held out)")
    if not test:
        raise ValueError("grid needs a non-empty test split")
    tcfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        window_length=args.window_length,
        learning_rate=args.lr,
        lr_decay=args.lr_decay,
        seed=args.seed,
    )
    result = run_ablation_grid(
        train[:-1],
        train[-1:],
        test,
        m.camera,
        channels=args.channels,
        dropout_rate=args.dropout,
        tcfg=tcfg,
        verbose=args.verbose,
    )
    print(result.render())
    with open(args.out, "w") as f:
        f.write(result.to_json())
        f.write("\n")
    print(f"table: {args.out}")
    return 0


def _cmd_plot(args) -> int:
    _print_config(args)
    from . import plots

    if args.kind == "loss":
        sidecar = args.input if args.input.endswith(".json") else args.input + ".json"
        with open(sidecar) as f:
            sc = json.load(f)
        curves = {
            "train loss": sc["train_loss_mm"],
            "train MPJPE": sc["train_mpjpe_mm"],
            "val MPJPE": sc["val_mpjpe_mm"],
        }
        plots.plot_loss_curves(curves, args.out, best_epoch=sc.get("best_epoch"))
    elif args.kind == "grid":
        with open(args.input) as f:
            grid = json.load(f)
        plots.plot_grid_bars(grid, args.out)
    else:  # overlay
        seq = read_sequence(args.input)
        if args.manifest:
            cam = read_manifest(args.manifest).camera
        else:
            cam = datagen.default_camera()
            print("camera: default (pass --manifest to use the dataset camera)")
        idxs = [int(p) for p in args.frames.split(",") if p.strip() != ""]
        plots.plot_overlay(seq, cam, idxs, args.out)
    print(f"figure: {args.out}")
    return 0


def _add_train_flags(p: argparse.ArgumentParser, with_model: bool) -> None:
    if with_model:
        p.add_argument("--input-mode", choices=sorted(_INPUT_MODES), default="2d+depth",
                       help="refiner inputs: 2d pose only, or 2d pose + joint depth")
        p.add_argument("--wb", choices=_WB_CHOICES, default="3,4",
                       help="kernel width W and block count B; receptive field W^(B+1)")
        p.add_argument("--sigma", type=float, default=0.1,
                       help="train-time Gaussian input noise; 0 disables augmentation")
        p.add_argument("--joints", type=int, default=17)
    p.add_argument("--channels", type=int, default=128 if with_model else 64)
    p.add_argument("--dropout", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=80 if with_model else 30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--window-length", type=int, default=None,
                   help="training window frames (default: receptive field + 31)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lr-decay", type=float, default=0.95)
    p.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pose3d",
        description="Two-stage video 3D pose pipeline: synthetic data, temporal refiner, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func, command=name)
        p.add_argument("--seed", type=int, default=_default_seed(),
                       help="RNG seed (default: POSE3D_SEED or 0)")
        return p

    p = add("synth", _cmd_synth, "generate synthetic motion sequences + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--sequences", type=int, default=4)
    p.add_argument("--test", type=int, default=0, help="how many sequences go to the test split")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--fps", type=float, default=50.0)
    p.add_argument("--harmonics", type=int, default=3)
    p.add_argument("--amplitude", type=float, default=0.5)

    p = add("simulate", _cmd_simulate, "add simulated first-stage observations to a dataset")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma-uv", type=float, default=4.0)
    p.add_argument("--sigma-depth", type=float, default=48.5)
    p.add_argument("--rho", type=float, default=0.0, help="AR(1) depth-noise correlation")
    p.add_argument("--outlier-rate", type=float, default=0.02)
    p.add_argument("--outlier-scale", type=float, default=3.0)

    p = add("train", _cmd_train, "train the temporal refiner")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_train_flags(p, with_model=True)

    p = add("eval", _cmd_eval, "evaluate predictions under both protocols")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--ckpt", default=None,
                   help="checkpoint to run; omitted: score stored pred fields")
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--out", default=None, help="write the report as JSON")

    p = add("refine", _cmd_refine, "write sequences with refiner predictions in a pred field")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)

    p = add("grid", _cmd_grid, "input-mode x receptive-field ablation table")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--out", required=True, help="table JSON path")
    _add_train_flags(p, with_model=False)

    p = add("plot", _cmd_plot, "emit vector-graphic figures")
    p.add_argument("--kind", choices=("loss", "grid", "overlay"), required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="checkpoint (loss), table JSON (grid), or poseseq (overlay)")
    p.add_argument("--out", required=True, help="output figure path (.svg)")
    p.add_argument("--frames", default="0", help="overlay frame indices, comma-separated")
    p.add_argument("--manifest", default=None, help="overlay: manifest supplying the camera")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegenerateConfigurationError, BehindCameraError, FloatingPointError,
            np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (Pose3DError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
