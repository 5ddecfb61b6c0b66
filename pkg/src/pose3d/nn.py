"""Minimal float64 neural-network layers with explicit gradients.

Everything here is plain numpy.  Layers are stateless between calls except
for their parameters (and batch-norm running statistics, which only change
in train mode): ``forward`` writes whatever ``backward`` needs into a
caller-provided cache dict, so inference with ``cache=None`` is a pure
function of (weights, inputs) and safe to run concurrently.

Array layouts: temporal data is (N, T, C); image data is (N, H, W, C).
Convolutions are "valid" (no implicit padding) unless a pad argument says
otherwise.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A named tensor with an accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv1D:
    """Temporal convolution, kernel (K, Cin, Cout), valid, with dilation."""

    def __init__(self, cin, cout, kernel, dilation=1, *, rng, name, weight_scale=1.0):
        self.kernel = int(kernel)
        self.dilation = int(dilation)
        w = fan_in_uniform(rng, (self.kernel, cin, cout), fan_in=self.kernel * cin)
        self.weight = Param(f"{name}.weight", w * weight_scale)
        self.bias = Param(f"{name}.bias", np.zeros(cout))

    @property
    def span(self) -> int:
        """Input frames touched by one output frame."""
        return (self.kernel - 1) * self.dilation + 1

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, cache=None):
        n, t, _ = x.shape
        t_out = t - (self.kernel - 1) * self.dilation
        if t_out < 1:
            raise ValueError(f"input length {t} shorter than kernel span {self.span}")
        out = np.broadcast_to(self.bias.value, (n, t_out, self.bias.value.shape[0])).copy()
        for k in range(self.kernel):
            s = k * self.dilation
            out += x[:, s : s + t_out, :] @ self.weight.value[k]
        if cache is not None:
            cache["x"] = x
            cache["t_out"] = t_out
        return out

    def backward(self, gout, cache):
        x, t_out = cache["x"], cache["t_out"]
        self.bias.grad += gout.sum(axis=(0, 1))
        gx = np.zeros_like(x)
        for k in range(self.kernel):
            s = k * self.dilation
            xs = x[:, s : s + t_out, :]
            self.weight.grad[k] += np.tensordot(xs, gout, axes=([0, 1], [0, 1]))
            gx[:, s : s + t_out, :] += gout @ self.weight.value[k].T
        return gx


class BatchNorm1D:
    """Per-channel batch norm over (N, T) with running statistics."""

    def __init__(self, channels, *, name, momentum=0.1, eps=1e-5):
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = Param(f"{name}.gamma", np.ones(channels))
        self.beta = Param(f"{name}.beta", np.zeros(channels))
        # running stats are state, not trainable parameters
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def params(self):
        return [self.gamma, self.beta]

    def state(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, cache=None, train=False):
        if train:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            # in place so held references (checkpointing) stay live
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        out = self.gamma.value * xhat + self.beta.value
        if cache is not None:
            cache["xhat"] = xhat
            cache["inv_std"] = inv_std
            cache["train"] = train
        return out

    def backward(self, gout, cache):
        xhat, inv_std = cache["xhat"], cache["inv_std"]
        self.gamma.grad += (gout * xhat).sum(axis=(0, 1))
        self.beta.grad += gout.sum(axis=(0, 1))
        gxhat = gout * self.gamma.value
        if not cache["train"]:
            # fixed statistics: plain affine map
            return gxhat * inv_std
        m = xhat.shape[0] * xhat.shape[1]
        gx = (
            gxhat - gxhat.mean(axis=(0, 1)) - xhat * (gxhat * xhat).sum(axis=(0, 1)) / m
        ) * inv_std
        return gx


class ReLU:
    def params(self):
        return []

    def forward(self, x, cache=None):
        out = np.maximum(x, 0.0)
        if cache is not None:
            cache["mask"] = x > 0
        return out

    def backward(self, gout, cache):
        return gout * cache["mask"]


class Dropout:
    """Inverted dropout; identity in eval mode or when rate is zero."""

    def __init__(self, rate):
        self.rate = float(rate)
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")

    def params(self):
        return []

    def forward(self, x, cache=None, train=False, rng=None):
        if not train or self.rate == 0.0:
            if cache is not None:
                cache["mask"] = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        if cache is not None:
            cache["mask"] = mask
        return x * mask

    def backward(self, gout, cache):
        mask = cache["mask"]
        return gout if mask is None else gout * mask


class Conv2D:
    """2D convolution on (N, H, W, C), kernel (KH, KW, Cin, Cout)."""

    def __init__(self, cin, cout, kernel, stride=1, pad=0, *, rng, name, weight_scale=1.0):
        self.kh = self.kw = int(kernel)
        self.stride = int(stride)
        self.pad = int(pad)
        w = fan_in_uniform(rng, (self.kh, self.kw, cin, cout), fan_in=self.kh * self.kw * cin)
        self.weight = Param(f"{name}.weight", w * weight_scale)
        self.bias = Param(f"{name}.bias", np.zeros(cout))

    def params(self):
        return [self.weight, self.bias]

    def out_size(self, h, w):
        ho = (h + 2 * self.pad - self.kh) // self.stride + 1
        wo = (w + 2 * self.pad - self.kw) // self.stride + 1
        return ho, wo

    def forward(self, x, cache=None):
        n, h, w, _ = x.shape
        p, s = self.pad, self.stride
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        ho, wo = self.out_size(h, w)
        out = np.broadcast_to(self.bias.value, (n, ho, wo, self.bias.value.shape[0])).copy()
        for a in range(self.kh):
            for b in range(self.kw):
                out += xp[:, a : a + s * ho : s, b : b + s * wo : s, :] @ self.weight.value[a, b]
        if cache is not None:
            cache["xp"] = xp
            cache["x_shape"] = x.shape
            cache["out_hw"] = (ho, wo)
        return out

    def backward(self, gout, cache):
        xp, (ho, wo) = cache["xp"], cache["out_hw"]
        p, s = self.pad, self.stride
        self.bias.grad += gout.sum(axis=(0, 1, 2))
        gxp = np.zeros_like(xp)
        for a in range(self.kh):
            for b in range(self.kw):
                xs = xp[:, a : a + s * ho : s, b : b + s * wo : s, :]
                self.weight.grad[a, b] += np.tensordot(xs, gout, axes=([0, 1, 2], [0, 1, 2]))
                gxp[:, a : a + s * ho : s, b : b + s * wo : s, :] += gout @ self.weight.value[a, b].T
        if p:
            gxp = gxp[:, p:-p, p:-p, :]
        return gxp


class ConvTranspose2D:
    """Transposed 2D convolution (the adjoint of Conv2D with same geometry)."""

    def __init__(self, cin, cout, kernel, stride=2, pad=1, *, rng, name, weight_scale=1.0):
        self.kh = self.kw = int(kernel)
        self.stride = int(stride)
        self.pad = int(pad)
        w = fan_in_uniform(rng, (self.kh, self.kw, cin, cout), fan_in=self.kh * self.kw * cin)
        self.weight = Param(f"{name}.weight", w * weight_scale)
        self.bias = Param(f"{name}.bias", np.zeros(cout))

    def params(self):
        return [self.weight, self.bias]

    def out_size(self, h, w):
        ho = (h - 1) * self.stride - 2 * self.pad + self.kh
        wo = (w - 1) * self.stride - 2 * self.pad + self.kw
        return ho, wo

    def forward(self, x, cache=None):
        n, h, w, _ = x.shape
        p, s = self.pad, self.stride
        cout = self.bias.value.shape[0]
        hf = (h - 1) * s + self.kh  # full (uncropped) output extent
        wf = (w - 1) * s + self.kw
        full = np.zeros((n, hf, wf, cout))
        for a in range(self.kh):
            for b in range(self.kw):
                full[:, a : a + s * h : s, b : b + s * w : s, :] += x @ self.weight.value[a, b]
        ho, wo = self.out_size(h, w)
        out = full[:, p : p + ho, p : p + wo, :] + self.bias.value
        if cache is not None:
            cache["x"] = x
            cache["full_shape"] = full.shape
        return out

    def backward(self, gout, cache):
        x = cache["x"]
        n, h, w, _ = x.shape
        p, s = self.pad, self.stride
        self.bias.grad += gout.sum(axis=(0, 1, 2))
        gfull = np.zeros(cache["full_shape"])
        ho, wo = self.out_size(h, w)
        gfull[:, p : p + ho, p : p + wo, :] = gout
        gx = np.zeros_like(x)
        for a in range(self.kh):
            for b in range(self.kw):
                gs = gfull[:, a : a + s * h : s, b : b + s * w : s, :]
                self.weight.grad[a, b] += np.tensordot(x, gs, axes=([0, 1, 2], [0, 1, 2]))
                gx += gs @ self.weight.value[a, b].T
        return gx


class Adam:
    """Adam with bias correction; deterministic given a fixed step order."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad ** 2
            p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def pack_params(params, state=()) -> bytes:
    """Concatenate parameter (and state) arrays into a raw float64 blob."""
    chunks = [np.ascontiguousarray(p.value, dtype=np.float64).tobytes() for p in params]
    chunks += [np.ascontiguousarray(a, dtype=np.float64).tobytes() for _, a in state]
    return b"".join(chunks)


def unpack_params(blob: bytes, params, state=()):
    """Inverse of :func:`pack_params`; writes values back in place."""
    offset = 0
    targets = [p.value for p in params] + [a for _, a in state]
    for arr in targets:
        n = arr.size * 8
        arr[...] = np.frombuffer(blob[offset : offset + n], dtype=np.float64).reshape(arr.shape)
        offset += n
    if offset != len(blob):
        raise ValueError(f"blob has {len(blob)} bytes, expected {offset}")
