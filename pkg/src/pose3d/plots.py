"""Static vector-graphic figures: loss curves, ablation bars, 2D overlays.

Matplotlib is imported lazily inside each function so that importing the
package (or running non-plot CLI subcommands) stays fast.
"""

from __future__ import annotations

import numpy as np

from .core import CameraIntrinsics, PoseSequence
from .datagen import project

__all__ = ["plot_loss_curves", "plot_grid_bars", "plot_overlay"]


def _agg_pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_loss_curves(curves: dict, out_path, best_epoch: int | None = None) -> None:
    """Line plot of named per-epoch series (mm); writes a vector file.

    ``best_epoch``, when given, is marked with a vertical line.
    """
    plt = _agg_pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name, series in curves.items():
        series = np.asarray(list(series), dtype=np.float64)
        if series.size == 0:
            continue
        ax.plot(np.arange(series.size), series, label=name, linewidth=1.4)
    if best_epoch is not None:
        ax.axvline(best_epoch, color="gray", linestyle=":", linewidth=1.0, label="best epoch")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mm")
    ax.set_title("training curves")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_grid_bars(grid: dict, out_path) -> None:
    """Grouped bars of protocol-1 error vs receptive field, one group per row.

    ``grid`` is the parsed ablation-table JSON: ``receptive_fields`` plus
    ``rows`` of ``{label, protocol1_mm, errors}``.  Failed cells (null) are
    left empty.
    """
    plt = _agg_pyplot()
    rfs = [str(rf) for rf in grid["receptive_fields"]]
    rows = grid["rows"]
    x = np.arange(len(rfs), dtype=np.float64)
    width = 0.8 / max(1, len(rows))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for r, row in enumerate(rows):
        offs = x + (r - (len(rows) - 1) / 2) * width
        for xi, v in zip(offs, row["protocol1_mm"]):
            if v is None:
                continue
            ax.bar(xi, v, width=width * 0.92, color=f"C{r}",
                   label=row["label"] if xi == offs[0] else None)
    ax.set_xticks(x)
    ax.set_xticklabels(rfs)
    ax.set_xlabel("receptive field (frames)")
    ax.set_ylabel("test MPJPE (mm)")
    ax.set_title("error vs receptive field")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def plot_overlay(
    seq: PoseSequence,
    cam: CameraIntrinsics,
    frame_indices,
    out_path,
) -> None:
    """2D skeleton overlays for selected frames of one sequence.

    Ground truth (when present, projected through ``cam``) is drawn as solid
    bones, predictions as dashed bones, raw observations as markers.
    """
    plt = _agg_pyplot()
    idxs = list(frame_indices)
    T = len(seq.frames)
    for i in idxs:
        if not 0 <= i < T:
            raise ValueError(f"frame index {i} out of range for a {T}-frame sequence")
    sk = seq.skeleton
    fig, axes = plt.subplots(1, len(idxs), figsize=(3.2 * len(idxs), 3.4), squeeze=False)
    for ax, i in zip(axes[0], idxs):
        fr = seq.frames[i]

        def draw_bones(uv, **kw):
            for j in sk.non_root_joints:
                p = sk.parents[j]
                ax.plot([uv[p, 0], uv[j, 0]], [uv[p, 1], uv[j, 1]], **kw)

        if fr.gt is not None and fr.root_abs_mm is not None:
            uv = project(cam, fr.gt.coords_mm + fr.root_abs_mm, root_index=sk.root_index).uv
            draw_bones(uv, color="0.55", linewidth=1.6, zorder=1)
        if fr.pred is not None and fr.root_abs_mm is not None:
            uv = project(cam, fr.pred.coords_mm + fr.root_abs_mm, root_index=sk.root_index).uv
            draw_bones(uv, color="C3", linewidth=1.2, linestyle="--", zorder=2)
        if fr.obs is not None:
            ax.plot(fr.obs.uv[:, 0], fr.obs.uv[:, 1], "x", color="C0", markersize=3, zorder=3)
        ax.set_xlim(0, cam.image_w)
        ax.set_ylim(cam.image_h, 0)  # image coordinates: v grows downward
        ax.set_aspect("equal")
        ax.set_title(f"frame {i}", fontsize=9)
        ax.tick_params(labelsize=7)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
