"""Per-frame 3D pose from images via integral heatmap regression.

A small strided conv backbone followed by three transposed convolutions
(kernel 4, stride 2) emits one 3D heatmap of size d x h x w per joint.
Heatmaps are softmax-normalized over all voxels of a joint and decoded by
soft-argmax: the probability-weighted centroid over bin-center coordinates.
The decode is a linear expectation, so supervision on decoded coordinates
backpropagates through the whole network.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import PoseObservation


@dataclass(frozen=True)
class HeatmapGrid:
    """Voxel grid geometry tying heatmap bins to image/depth coordinates.

    Bin (i, j) covers the input image uniformly: x centers are
    (j + 0.5) * image_w / w, y centers (i + 0.5) * image_h / h.  Depth bin
    centers are z_k = -D/2 + (k + 0.5) * D/d over the root-centered range
    [-D/2, D/2] with D = ``depth_range_mm``.
    """

    w: int = 32
    h: int = 32
    d: int = 16
    depth_range_mm: float = 1500.0
    image_w: int = 64
    image_h: int = 64

    def __post_init__(self):
        for name in ("w", "h", "d", "image_w", "image_h"):
            object.__setattr__(self, name, int(getattr(self, name)))
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        object.__setattr__(self, "depth_range_mm", float(self.depth_range_mm))
        if not self.depth_range_mm > 0:
            raise ValueError(f"depth_range_mm must be positive, got {self.depth_range_mm}")

    @property
    def num_voxels(self) -> int:
        return self.w * self.h * self.d

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.w) + 0.5) * (self.image_w / self.w)

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.h) + 0.5) * (self.image_h / self.h)

    def z_centers(self) -> np.ndarray:
        dd = self.depth_range_mm
        return -dd / 2 + (np.arange(self.d) + 0.5) * (dd / self.d)


@dataclass(frozen=True)
class Heatmap3D:
    """Per-joint voxel heatmaps, (J, d, h, w) non-negative."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"values must be (J, d, h, w), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("heatmap contains non-finite values")
        if v.min() < 0:
            raise ValueError("heatmap values must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def num_joints(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ImageTensor:
    """An H x W x 3 image with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("image contains non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def softmax_per_joint(logits: np.ndarray) -> np.ndarray:
    """Softmax over each joint's (d, h, w) block, stable under shifts."""
    x = np.asarray(logits, dtype=np.float64)
    flat = x.reshape(x.shape[0], -1)
    flat = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(flat)
    return (e / e.sum(axis=1, keepdims=True)).reshape(x.shape)


def normalize_heatmap(raw) -> Heatmap3D:
    """Per-joint softmax over all voxels; each joint then sums to 1."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"expected (J, d, h, w) logits, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("logits contain non-finite values")
    return Heatmap3D(softmax_per_joint(x))


def _expected_coords(probs: np.ndarray, grid: HeatmapGrid) -> np.ndarray:
    """Probability-weighted centroid per joint, (..., J, 3) as (x, y, z).

    ``probs`` is (..., J, d, h, w); the expectation reduces each axis
    through its marginal, which equals the full triple sum.
    """
    x = probs.sum(axis=(-3, -2)) @ grid.x_centers()
    y = probs.sum(axis=(-3, -1)) @ grid.y_centers()
    z = probs.sum(axis=(-2, -1)) @ grid.z_centers()
    return np.stack([x, y, z], axis=-1)


def soft_argmax(hm, grid: HeatmapGrid, tol: float = 1e-4) -> PoseObservation:
    """Decode heatmaps to per-joint (u, v) pixels and depth mm.

    Each joint's decoded point is the expectation of the bin-center
    coordinates under the heatmap, so it always lies inside the convex hull
    of the bin centers.  Depths here are grid-relative (not yet root
    subtracted).  Joints whose mass does not sum to 1 within ``tol`` are
    rejected by name of their index.
    """
    v = hm.values if isinstance(hm, Heatmap3D) else np.asarray(hm, dtype=np.float64)
    if v.ndim != 4:
        raise ValueError(f"expected (J, d, h, w) heatmap, got {v.shape}")
    if v.shape[1:] != (grid.d, grid.h, grid.w):
        raise ValueError(f"heatmap shape {v.shape[1:]} does not match grid ({grid.d}, {grid.h}, {grid.w})")
    sums = v.reshape(v.shape[0], -1).sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(
            f"joint {bad[0]} heatmap is not normalized: sum={float(sums[bad[0]]):.6g} (tolerance {tol})"
        )
    coords = _expected_coords(v, grid)
    return PoseObservation(uv=coords[:, :2], depth_mm=coords[:, 2])


@dataclass(frozen=True)
class Stage1Config:
    """Backbone plan, deconv head widths and heatmap grid.

    ``backbone`` lists (channels, stride) conv stages; the head is exactly
    three transposed convolutions of kernel 4 and stride 2, the first two
    with ``head_channels`` outputs and the last emitting joints * grid.d
    heatmap logit channels at spatial size (grid.h, grid.w).
    """

    joints: int = 17
    root_index: int = 0
    image_h: int = 64
    image_w: int = 64
    backbone: tuple[tuple[int, int], ...] = ((16, 2), (32, 2), (64, 2), (64, 2))
    head_channels: tuple[int, int] = (64, 32)
    grid: HeatmapGrid = field(default_factory=HeatmapGrid)

    def __post_init__(self):
        if self.joints < 2:
            raise ValueError(f"joints must be >= 2, got {self.joints}")
        if not 0 <= self.root_index < self.joints:
            raise ValueError(f"root_index {self.root_index} out of range")
        if len(self.head_channels) != 2:
            raise ValueError("head_channels must name the first two deconv widths")
        if self.grid.image_w != self.image_w or self.grid.image_h != self.image_h:
            raise ValueError("grid image mapping must match the input image size")
        hh, ww = self.image_h, self.image_w
        for c, s in self.backbone:
            if c < 1 or s < 1:
                raise ValueError(f"bad backbone stage ({c}, {s})")
            if hh % s or ww % s:
                raise ValueError(f"stride {s} does not divide spatial size ({hh}, {ww})")
            hh, ww = hh // s, ww // s
        if (hh * 8, ww * 8) != (self.grid.h, self.grid.w):
            raise ValueError(
                f"head output spatial size ({hh * 8}, {ww * 8}) must equal grid ({self.grid.h}, {self.grid.w})"
            )

    @property
    def heatmap_channels(self) -> int:
        return self.joints * self.grid.d


class _BN2D:
    """Per-channel batch norm on (N, H, W, C) via the 1D implementation."""

    def __init__(self, channels, *, name):
        self.bn = nn.BatchNorm1D(channels, name=name)

    def params(self):
        return self.bn.params()

    def state(self):
        return self.bn.state()

    def forward(self, x, cache=None, train=False):
        n, h, w, c = x.shape
        if cache is not None:
            cache["shape"] = x.shape
        return self.bn.forward(x.reshape(n, h * w, c), cache=cache, train=train).reshape(x.shape)

    def backward(self, gout, cache):
        n, h, w, c = cache["shape"]
        return self.bn.backward(gout.reshape(n, h * w, c), cache).reshape(n, h, w, c)


class Stage1Network:
    """Weights + forward/backward for the heatmap regressor."""

    def __init__(self, cfg: Stage1Config, seed: int):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        cin = 3
        self.layers = []
        for i, (c, s) in enumerate(cfg.backbone):
            self.layers.append(nn.Conv2D(cin, c, kernel=3, stride=s, pad=1, rng=rng, name=f"bb{i}.conv"))
            self.layers.append(_BN2D(c, name=f"bb{i}.bn"))
            self.layers.append(nn.ReLU())
            cin = c
        widths = list(cfg.head_channels) + [cfg.heatmap_channels]
        for i, c in enumerate(widths):
            last = i == len(widths) - 1
            # small final init keeps initial heatmaps near uniform
            self.layers.append(
                nn.ConvTranspose2D(
                    cin, c, kernel=4, stride=2, pad=1, rng=rng, name=f"head{i}.deconv",
                    weight_scale=0.01 if last else 1.0,
                )
            )
            if not last:
                self.layers.append(_BN2D(c, name=f"head{i}.bn"))
                self.layers.append(nn.ReLU())
            cin = c

    def params(self) -> list[nn.Param]:
        out = []
        for layer in self.layers:
            if hasattr(layer, "params"):
                out += layer.params()
        return out

    def state(self):
        out = []
        for layer in self.layers:
            if isinstance(layer, _BN2D):
                out += layer.state()
        return out

    def forward(self, images: np.ndarray, train: bool = False, caches: list | None = None):
        """(N, H, W, 3) images to (N, J, d, h, w) heatmap logits."""
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1:] != (cfg.image_h, cfg.image_w, 3):
            raise ValueError(
                f"expected (N, {cfg.image_h}, {cfg.image_w}, 3) images, got {images.shape}"
            )
        h = images
        for layer in self.layers:
            cache = None
            if caches is not None:
                cache = {}
                caches.append((layer, cache))
            if isinstance(layer, _BN2D):
                h = layer.forward(h, cache=cache, train=train)
            else:
                h = layer.forward(h, cache=cache)
        n = h.shape[0]
        # channel c = j * d + k, channels-last -> (N, J, d, h, w)
        return h.reshape(n, cfg.grid.h, cfg.grid.w, cfg.joints, cfg.grid.d).transpose(0, 3, 4, 1, 2)

    def backward(self, glogits: np.ndarray, caches: list) -> None:
        cfg = self.cfg
        n = glogits.shape[0]
        grad = glogits.transpose(0, 3, 4, 1, 2).reshape(
            n, cfg.grid.h, cfg.grid.w, cfg.joints * cfg.grid.d
        )
        for layer, cache in reversed(caches):
            grad = layer.backward(grad, cache)


def build_stage1(cfg: Stage1Config, seed: int) -> Stage1Network:
    return Stage1Network(cfg, seed)


def stage1_forward(net: Stage1Network, img) -> tuple[Heatmap3D, PoseObservation]:
    """Single-image inference: normalized heatmaps plus decoded observation.

    Decoded depths are root-relative: the decoded root depth is subtracted
    from every joint, pinning the root's entry to exactly zero.
    """
    values = img.values if isinstance(img, ImageTensor) else np.asarray(img, dtype=np.float64)
    logits = net.forward(values[None])[0]
    hm = normalize_heatmap(logits)
    raw = soft_argmax(hm, net.cfg.grid)
    depth = raw.depth_mm - raw.depth_mm[net.cfg.root_index]
    depth[net.cfg.root_index] = 0.0
    return hm, PoseObservation(uv=raw.uv, depth_mm=depth)


def stage1_loss(pred: PoseObservation, target: PoseObservation, mode: str = "full3d") -> float:
    """Mean absolute error over supervised channels.

    ``full3d`` averages |du| + |dv| + |dz| over 3J entries; ``xy_only``
    ignores depth entirely (2J entries), which is how image-only 2D
    supervision plugs into the same decoded-coordinate loss.
    """
    if mode not in ("full3d", "xy_only"):
        raise ValueError(f"mode must be 'full3d' or 'xy_only', got {mode!r}")
    if pred.num_joints != target.num_joints:
        raise ValueError(f"joint mismatch: {pred.num_joints} vs {target.num_joints}")
    terms = [np.abs(pred.uv - target.uv).sum()]
    count = 2 * pred.num_joints
    if mode == "full3d":
        terms.append(np.abs(pred.depth_mm - target.depth_mm).sum())
        count += pred.num_joints
    return float(sum(terms) / count)


def stage1_loss_grad(
    logits: np.ndarray,
    grid: HeatmapGrid,
    target_uv: np.ndarray,
    target_depth: np.ndarray,
    mode: str = "full3d",
    root_index: int = 0,
):
    """Loss and d(loss)/d(logits) through softmax, decode and root shift.

    ``logits`` is (J, d, h, w) or (N, J, d, h, w); targets broadcast
    accordingly ((J, 2)/(J,) or with a leading N).  Returns
    (mean loss, gradient array shaped like logits).  The decoded depth is
    root-subtracted before comparison, exactly as in stage1_forward.
    """
    if mode not in ("full3d", "xy_only"):
        raise ValueError(f"mode must be 'full3d' or 'xy_only', got {mode!r}")
    x = np.asarray(logits, dtype=np.float64)
    squeeze = x.ndim == 4
    if squeeze:
        x = x[None]
    n, j = x.shape[0], x.shape[1]
    t_uv = np.broadcast_to(np.asarray(target_uv, dtype=np.float64), (n, j, 2))
    t_z = np.broadcast_to(np.asarray(target_depth, dtype=np.float64), (n, j))

    flat = x.reshape(n, j, -1)
    flat = flat - flat.max(axis=2, keepdims=True)
    e = np.exp(flat)
    probs = (e / e.sum(axis=2, keepdims=True)).reshape(x.shape)

    coords = _expected_coords(probs, grid)
    z = coords[..., 2]
    z_rel = z - z[:, root_index : root_index + 1]
    e_uv = coords[..., :2] - t_uv
    per_ex = 3 * j if mode == "full3d" else 2 * j
    loss = np.abs(e_uv).sum()
    g_uv = np.sign(e_uv) / (per_ex * n)
    if mode == "full3d":
        e_z = z_rel - t_z
        loss += np.abs(e_z).sum()
        gz_rel = np.sign(e_z) / (per_ex * n)
        gz = gz_rel.copy()
        gz[:, root_index] -= gz_rel.sum(axis=1)
    else:
        gz = np.zeros((n, j))
    loss /= per_ex * n

    # d(coords)/d(probs) is the bin-center lattice; combine channels then
    # pull back through the per-joint softmax
    xc, yc, zc = grid.x_centers(), grid.y_centers(), grid.z_centers()
    gprobs = (
        g_uv[..., 0, None, None, None] * xc[None, None, None, None, :]
        + g_uv[..., 1, None, None, None] * yc[None, None, None, :, None]
        + gz[..., None, None, None] * zc[None, None, :, None, None]
    )
    inner = np.einsum("njdhw,njdhw->nj", gprobs, probs)
    glogits = probs * (gprobs - inner[..., None, None, None])
    if squeeze:
        glogits = glogits[0]
    return float(loss), glogits


def fit_stage1(
    net: Stage1Network,
    images: np.ndarray,
    targets: list[PoseObservation],
    epochs: int = 100,
    batch_size: int = 8,
    lr: float = 3e-3,
    lr_decay: float = 0.99,
    mode: str = "full3d",
    seed: int = 0,
    log_every: int = 0,
) -> list[float]:
    """Adam training on decoded-coordinate L1 loss; returns per-epoch losses.

    ``targets`` hold absolute pixel uv and root-relative depth per image.
    """
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    if len(targets) != n:
        raise ValueError(f"{n} images but {len(targets)} targets")
    t_uv = np.stack([t.uv for t in targets])
    t_z = np.stack([t.depth_mm for t in targets])
    params = net.params()
    opt = nn.Adam(params, lr=lr)
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            caches: list = []
            logits = net.forward(images[idx], train=True, caches=caches)
            loss, glogits = stage1_loss_grad(
                logits, net.cfg.grid, t_uv[idx], t_z[idx], mode=mode, root_index=net.cfg.root_index
            )
            opt.zero_grad()
            net.backward(glogits, caches)
            opt.step(lr * (lr_decay**epoch))
            total += loss * len(idx)
        history.append(total / n)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1:4d}  loss {history[-1]:.4f}")
    return history


STAGE1_CHECKPOINT_VERSION = 1


def save_stage1(net: Stage1Network, path) -> None:
    """Write weights as one float64 blob plus a JSON sidecar (.json).

    The blob stores every parameter then every batch-norm statistic in
    declaration order; the sidecar records the config and the name/shape of
    each array in that order.
    """
    params = net.params()
    state = net.state()
    blob = nn.pack_params(params, state)
    path = str(path)
    with open(path, "wb") as f:
        f.write(blob)
    cfg = net.cfg
    sidecar = {
        "format": "stage1-checkpoint",
        "version": STAGE1_CHECKPOINT_VERSION,
        "config": {
            "joints": cfg.joints,
            "root_index": cfg.root_index,
            "image_h": cfg.image_h,
            "image_w": cfg.image_w,
            "backbone": [list(st) for st in cfg.backbone],
            "head_channels": list(cfg.head_channels),
            "grid": {
                "w": cfg.grid.w,
                "h": cfg.grid.h,
                "d": cfg.grid.d,
                "depth_range_mm": cfg.grid.depth_range_mm,
                "image_w": cfg.grid.image_w,
                "image_h": cfg.grid.image_h,
            },
        },
        "arrays": [{"name": p.name, "shape": list(p.value.shape)} for p in params]
        + [{"name": name, "shape": list(a.shape)} for name, a in state],
    }
    with open(path + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_stage1(path) -> Stage1Network:
    path = str(path)
    with open(path + ".json") as f:
        sidecar = json.load(f)
    if sidecar.get("format") != "stage1-checkpoint" or sidecar.get("version") != STAGE1_CHECKPOINT_VERSION:
        raise ValueError(f"not a stage1 checkpoint (version {STAGE1_CHECKPOINT_VERSION}): {path}")
    c = sidecar["config"]
    cfg = Stage1Config(
        joints=c["joints"],
        root_index=c["root_index"],
        image_h=c["image_h"],
        image_w=c["image_w"],
        backbone=tuple(tuple(st) for st in c["backbone"]),
        head_channels=tuple(c["head_channels"]),
        grid=HeatmapGrid(**c["grid"]),
    )
    net = Stage1Network(cfg, seed=0)
    with open(path, "rb") as f:
        blob = f.read()
    nn.unpack_params(blob, net.params(), net.state())
    return net
