"""Temporal refiner: dilated residual 1D ConvNet over pose sequences.

The network maps a normalized per-frame pose representation (2J channels of
image coordinates, or 3J with joint depths) to root-relative 3D poses.  An
input convolution of kernel K feeds B residual blocks; block ``b`` holds a
kernel-K convolution with dilation K**b followed by a kernel-1 convolution,
each with batch norm / ReLU / dropout; a final kernel-1 convolution emits 3J
channels.  With valid (unpadded) convolutions one output frame sees exactly
K**(B+1) input frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .core import NormalizationSpec

INPUT_MODES = ("pose2d", "pose2d_depth")
PADDING_MODES = ("valid", "replicate_edges")


@dataclass(frozen=True)
class TemporalModelConfig:
    """Architecture hyperparameters of the temporal refiner."""

    joints: int = 17
    kernel_size: int = 3
    num_blocks: int = 4
    channels: int = 1024
    dropout_rate: float = 0.25
    input_mode: str = "pose2d_depth"
    padding_mode: str = "replicate_edges"

    def __post_init__(self):
        if self.joints < 2:
            raise ValueError(f"joints must be >= 2, got {self.joints}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.num_blocks < 1:
            raise ValueError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES}, got {self.input_mode!r}")
        if self.padding_mode not in PADDING_MODES:
            raise ValueError(
                f"padding_mode must be one of {PADDING_MODES}, got {self.padding_mode!r}"
            )

    @property
    def input_channels(self) -> int:
        return (2 if self.input_mode == "pose2d" else 3) * self.joints

    @property
    def output_channels(self) -> int:
        return 3 * self.joints


def receptive_field(cfg: TemporalModelConfig) -> int:
    """Temporal receptive field in frames: kernel_size ** (num_blocks + 1)."""
    return cfg.kernel_size ** (cfg.num_blocks + 1)


class TemporalModel:
    """Weights + forward/backward passes for one TemporalModelConfig."""

    def __init__(self, cfg: TemporalModelConfig, seed: int):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        k, c = cfg.kernel_size, cfg.channels
        self.in_conv = nn.Conv1D(cfg.input_channels, c, k, rng=rng, name="in_conv")
        self.in_bn = nn.BatchNorm1D(c, name="in_bn")
        self.blocks = []
        for b in range(1, cfg.num_blocks + 1):
            self.blocks.append(
                {
                    "dconv": nn.Conv1D(c, c, k, dilation=k**b, rng=rng, name=f"block{b}.dconv"),
                    "bn1": nn.BatchNorm1D(c, name=f"block{b}.bn1"),
                    "pconv": nn.Conv1D(c, c, 1, rng=rng, name=f"block{b}.pconv"),
                    "bn2": nn.BatchNorm1D(c, name=f"block{b}.bn2"),
                }
            )
        # small output init: initial predictions near zero, not random mm
        self.out_conv = nn.Conv1D(c, cfg.output_channels, 1, rng=rng, name="out_conv", weight_scale=0.01)
        self.dropout = nn.Dropout(cfg.dropout_rate)
        self.relu = nn.ReLU()

    def params(self) -> list[nn.Param]:
        out = self.in_conv.params() + self.in_bn.params()
        for blk in self.blocks:
            for layer in ("dconv", "bn1", "pconv", "bn2"):
                out += blk[layer].params()
        return out + self.out_conv.params()

    def state(self):
        """Non-trainable state (batch-norm running statistics), named."""
        out = [(f"in_bn.{n}", a) for n, a in self.in_bn.state()]
        for i, blk in enumerate(self.blocks, start=1):
            for layer in ("bn1", "bn2"):
                out += [(f"block{i}.{layer}.{n}", a) for n, a in blk[layer].state()]
        return out

    def param_count(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, x: np.ndarray, train: bool = False, rng=None, caches: list | None = None):
        """Run the network on (N, T, Cin); returns (N, T', 3J) raw outputs.

        ``caches`` (a list to append to) records what :meth:`backward` needs.
        With ``caches=None`` and ``train=False`` this is a pure function of
        (weights, inputs) and touches no model state.
        """
        if x.ndim != 3 or x.shape[2] != self.cfg.input_channels:
            raise ValueError(f"expected (N, T, {self.cfg.input_channels}) input, got {x.shape}")

        def step(layer, h, **kw):
            cache = None
            if caches is not None:
                cache = {}
                caches.append((layer, cache))
            return layer.forward(h, cache=cache, **kw)

        def mark(tag, **info):
            if caches is not None:
                caches.append((tag, info))

        h = step(self.in_conv, x)
        h = step(self.in_bn, h, train=train)
        h = step(self.relu, h)
        h = step(self.dropout, h, train=train, rng=rng)
        for blk in self.blocks:
            t_in = h.shape[1]
            mark("block_start")
            y = step(blk["dconv"], h)
            y = step(blk["bn1"], y, train=train)
            y = step(self.relu, y)
            y = step(self.dropout, y, train=train, rng=rng)
            y = step(blk["pconv"], y)
            y = step(blk["bn2"], y, train=train)
            y = step(self.relu, y)
            y = step(self.dropout, y, train=train, rng=rng)
            trim = (t_in - y.shape[1]) // 2  # center crop of the skip path
            mark("block_end", trim=trim, t_in=t_in)
            h = h[:, trim : t_in - trim, :] + y
        return step(self.out_conv, h)

    def backward(self, gout: np.ndarray, caches: list) -> np.ndarray:
        """Backpropagate d(loss)/d(output); returns d(loss)/d(input).

        Parameter gradients accumulate into ``param.grad``.
        """
        grad = gout
        skip_grads: list[np.ndarray] = []
        for layer, cache in reversed(caches):
            if layer == "block_end":
                # grad is d/d(block output): route one copy around the body
                trim, t_in = cache["trim"], cache["t_in"]
                gskip = np.zeros((grad.shape[0], t_in, grad.shape[2]))
                gskip[:, trim : t_in - trim, :] = grad
                skip_grads.append(gskip)
            elif layer == "block_start":
                grad = grad + skip_grads.pop()
            else:
                grad = layer.backward(grad, cache)
        return grad


def build_model(cfg: TemporalModelConfig, seed: int) -> TemporalModel:
    """Deterministically initialize a model: same seed, bit-identical weights."""
    return TemporalModel(cfg, seed)


def replicate_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Extend a (T, C) or (N, T, C) array by repeating edge frames."""
    if pad == 0:
        return x
    axis = x.ndim - 2
    return np.concatenate(
        [
            np.repeat(x.take([0], axis=axis), pad, axis=axis),
            x,
            np.repeat(x.take([-1], axis=axis), pad, axis=axis),
        ],
        axis=axis,
    )


def temporal_forward(
    model: TemporalModel,
    inputs: np.ndarray,
    mode: str = "infer",
    rng=None,
    output_scale_mm: float = NormalizationSpec().depth_scale_mm,
) -> np.ndarray:
    """Map a (T, Cin) normalized input sequence to (T', 3J) root-relative mm.

    In ``valid`` padding mode T' = T - RF + 1 and output frame t depends on
    input frames [t, t + RF - 1]; in ``replicate_edges`` mode the input is
    edge-padded by (RF - 1) / 2 per side first, so T' = T.  ``infer`` mode
    disables dropout and uses running batch-norm statistics.  Raw network
    outputs are in normalized units and scaled by ``output_scale_mm``.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(inputs, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    rf = receptive_field(model.cfg)
    if model.cfg.padding_mode == "replicate_edges":
        x = replicate_pad(x, (rf - 1) // 2)
    elif x.shape[1] < rf:
        raise ValueError(
            f"sequence length {x.shape[1]} shorter than receptive field {rf} in valid mode"
        )
    out = model.forward(x, train=(mode == "train"), rng=rng) * output_scale_mm
    return out[0] if squeeze else out


def model_gradient_check(cfg: TemporalModelConfig, seed: int = 0, step: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    Uses a scalar L2 head on a short random sequence, dropout off and batch
    norm on fixed (running) statistics.  Returns the worst relative error
    over the input gradient and every weight gradient.
    """
    if cfg.channels > 16 or cfg.num_blocks > 2:
        raise ValueError("gradient check is meant for small configs (C <= 16, B <= 2)")
    cfg = TemporalModelConfig(
        joints=cfg.joints,
        kernel_size=cfg.kernel_size,
        num_blocks=cfg.num_blocks,
        channels=cfg.channels,
        dropout_rate=0.0,
        input_mode=cfg.input_mode,
        padding_mode="valid",
    )
    model = build_model(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    # non-trivial fixed statistics so batch norm is a real affine map
    for name, arr in model.state():
        if name.endswith("running_var"):
            arr[...] = rng.uniform(0.5, 1.5, size=arr.shape)
        else:
            arr[...] = rng.normal(0.0, 0.1, size=arr.shape)
    rf = receptive_field(cfg)
    t = rf + 3
    x = rng.normal(0.0, 1.0, size=(1, t, cfg.input_channels))
    target = rng.normal(0.0, 1.0, size=(1, t - rf + 1, cfg.output_channels))

    def loss():
        y = model.forward(x, train=False)
        return 0.5 * np.sum((y - target) ** 2)

    caches: list = []
    y = model.forward(x, train=False, caches=caches)
    for p in model.params():
        p.grad[...] = 0.0
    gx = model.backward(y - target, caches)

    analytic = [gx] + [p.grad.copy() for p in model.params()]
    tensors = [x] + [p.value for p in model.params()]
    gmax = max(np.abs(a).max() for a in analytic)
    worst = 0.0
    for a, v in zip(analytic, tensors):
        flat_v = v.reshape(-1)
        flat_a = a.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + step
            hi = loss()
            flat_v[i] = orig - step
            lo = loss()
            flat_v[i] = orig
            fd = (hi - lo) / (2 * step)
            denom = max(abs(flat_a[i]) + abs(fd), 1e-3 * gmax, 1e-12)
            worst = max(worst, abs(flat_a[i] - fd) / denom)
    return worst
