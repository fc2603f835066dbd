"""Dense primitives on (C, H, W) float64 tensors: conv, upsample, norms.

Each forward has a matching hand-derived backward that returns exact
analytic gradients. Same-shape padding is used for all convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ConvParams:
    """Weights of a same-padding k x k convolution (k odd, typically 1 or 3)."""

    weight: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)

    def __post_init__(self) -> None:
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"weight must be (out, in, k, k), got {self.weight.shape}")
        if self.weight.shape[2] % 2 != 1:
            raise ValueError("kernel size must be odd for same-shape padding")
        if self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias must have one entry per output channel")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("convolution parameters must be finite")

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def seeded(cls, out_ch: int, in_ch: int, k: int, rng: np.random.Generator) -> "ConvParams":
        """Deterministic toy initialization, uniform in [-0.1, 0.1]."""
        return cls(
            weight=rng.uniform(-0.1, 0.1, size=(out_ch, in_ch, k, k)),
            bias=rng.uniform(-0.1, 0.1, size=out_ch),
        )


@dataclass
class NormParams:
    """Inference-style per-channel normalization: y = g*(x - mu)/sqrt(v+eps) + b.

    Running statistics are fixed inputs (no batch statistics are computed);
    only scale and shift are trainable.
    """

    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self) -> None:
        n = self.scale.shape[0]
        for name in ("shift", "running_mean", "running_var"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must match scale's channel count")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")

    @property
    def channels(self) -> int:
        return self.scale.shape[0]

    @classmethod
    def seeded(cls, channels: int, rng: np.random.Generator) -> "NormParams":
        return cls(
            scale=1.0 + rng.uniform(-0.1, 0.1, size=channels),
            shift=rng.uniform(-0.1, 0.1, size=channels),
            running_mean=rng.uniform(-0.1, 0.1, size=channels),
            running_var=1.0 + rng.uniform(-0.1, 0.1, size=channels),
        )


def _check_tensor(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a (C, H, W) tensor, got shape {x.shape}")
    return x


def conv2d(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Direct same-padding convolution (cross-correlation convention)."""
    x = _check_tensor(x)
    if x.shape[0] != p.in_channels:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {p.in_channels}")
    k = p.kernel_size
    pad = k // 2
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    y = np.empty((p.out_channels, h, w))
    y[:] = p.bias[:, None, None]
    for dy in range(k):
        for dx in range(k):
            y += np.einsum("oi,ihw->ohw", p.weight[:, :, dy, dx], xp[:, dy : dy + h, dx : dx + w])
    return y


def conv2d_backward(
    x: np.ndarray, p: ConvParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_weight, d_bias) of the same-padding convolution."""
    x = _check_tensor(x)
    grad_out = _check_tensor(grad_out)
    k = p.kernel_size
    pad = k // 2
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    grad_w = np.empty_like(p.weight)
    grad_xp = np.zeros_like(xp)
    for dy in range(k):
        for dx in range(k):
            window = xp[:, dy : dy + h, dx : dx + w]
            grad_w[:, :, dy, dx] = np.einsum("ohw,ihw->oi", grad_out, window)
            grad_xp[:, dy : dy + h, dx : dx + w] += np.einsum(
                "oi,ohw->ihw", p.weight[:, :, dy, dx], grad_out
            )
    grad_x = grad_xp[:, pad : pad + h, pad : pad + w] if pad else grad_xp
    grad_b = grad_out.sum(axis=(1, 2))
    return grad_x, grad_w, grad_b


def _upsample_axis(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-output-pixel source indices and blend fraction for one axis.

    Half-pixel-center convention: src = (i + 0.5) * in/out - 0.5, clamped to
    the valid range before splitting into floor index and fraction.
    """
    scale = in_size / out_size
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_upsample(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a (C, h, w) tensor to (C, out_h, out_w) by bilinear blending."""
    x = _check_tensor(x)
    _, h, w = x.shape
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target extents must be positive, got {(out_h, out_w)}")
    if out_h < h or out_w < w:
        raise ValueError("bilinear_upsample does not downsample")
    ry0, ry1, fy = _upsample_axis(h, out_h)
    rx0, rx1, fx = _upsample_axis(w, out_w)
    wy = fy[:, None]
    wx = fx[None, :]
    top = x[:, ry0][:, :, rx0] * (1 - wx) + x[:, ry0][:, :, rx1] * wx
    bottom = x[:, ry1][:, :, rx0] * (1 - wx) + x[:, ry1][:, :, rx1] * wx
    return top * (1 - wy) + bottom * wy


def bilinear_upsample_backward(grad_out: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of :func:`bilinear_upsample`: scatter-add the blend weights."""
    grad_out = _check_tensor(grad_out)
    c, out_h, out_w = grad_out.shape
    ry0, ry1, fy = _upsample_axis(in_h, out_h)
    rx0, rx1, fx = _upsample_axis(in_w, out_w)
    wy = fy[:, None]
    wx = fx[None, :]
    grad_x = np.zeros((c, in_h, in_w))
    channel = np.arange(c)[:, None, None]
    for rows, row_w in ((ry0, 1 - wy), (ry1, wy)):
        for cols, col_w in ((rx0, 1 - wx), (rx1, wx)):
            np.add.at(
                grad_x,
                (channel, rows[None, :, None], cols[None, None, :]),
                grad_out * (row_w * col_w)[None],
            )
    return grad_x


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def batchnorm_forward(x: np.ndarray, p: NormParams) -> np.ndarray:
    x = _check_tensor(x)
    if x.shape[0] != p.channels:
        raise ValueError(f"input has {x.shape[0]} channels, norm expects {p.channels}")
    inv_std = 1.0 / np.sqrt(p.running_var + p.epsilon)
    return (x - p.running_mean[:, None, None]) * (p.scale * inv_std)[:, None, None] + p.shift[
        :, None, None
    ]


def batchnorm_backward(
    x: np.ndarray, p: NormParams, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (d_input, d_scale, d_shift); running stats are constants."""
    inv_std = 1.0 / np.sqrt(p.running_var + p.epsilon)
    x_hat = (x - p.running_mean[:, None, None]) * inv_std[:, None, None]
    grad_x = grad_out * (p.scale * inv_std)[:, None, None]
    grad_scale = (grad_out * x_hat).sum(axis=(1, 2))
    grad_shift = grad_out.sum(axis=(1, 2))
    return grad_x, grad_scale, grad_shift
