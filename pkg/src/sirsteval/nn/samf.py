"""Semantic alignment and modulated fusion of a frozen prior into features.

One stage aligns a prior feature tensor to the working resolution, derives a
multiplicative gate and an additive semantic map from it, modulates the two
channel halves of the task features, and refines the concatenated result
residually. The prior input is frozen: its parameters upstream receive no
gradient from this module, only the stage's own parameters and the task
features do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .primitives import (
    ConvParams,
    NormParams,
    batchnorm_backward,
    batchnorm_forward,
    bilinear_upsample,
    bilinear_upsample_backward,
    conv2d,
    conv2d_backward,
    relu,
    sigmoid,
)


@dataclass
class SamfStage:
    """Parameters of one fusion stage.

    ``align`` projects the prior to ``inner_channels`` before upsampling;
    ``mul_branch``/``add_branch`` map the aligned prior to the gating and
    additive maps (each over half the task channels); ``fuse_mul``/
    ``fuse_add`` refine the modulated halves; ``out_fuse`` integrates the
    residual sum.
    """

    align: ConvParams  # 1x1: prior_channels -> inner_channels
    mul_branch: ConvParams  # 1x1: inner_channels -> top_channels // 2
    add_branch: ConvParams  # 1x1: inner_channels -> top_channels // 2
    add_norm: NormParams  # top_channels // 2
    fuse_mul: ConvParams  # 3x3: top_channels // 2 -> top_channels // 2
    fuse_add: ConvParams  # 1x1: top_channels // 2 -> top_channels // 2
    out_fuse: ConvParams  # 3x3: top_channels -> top_channels

    def __post_init__(self) -> None:
        half = self.mul_branch.out_channels
        inner = self.align.out_channels
        checks = [
            (self.mul_branch.in_channels == inner, "mul_branch input must match align output"),
            (self.add_branch.in_channels == inner, "add_branch input must match align output"),
            (self.add_branch.out_channels == half, "add_branch output must match mul_branch output"),
            (self.add_norm.channels == half, "add_norm channels must match add_branch output"),
            (self.fuse_mul.in_channels == half and self.fuse_mul.out_channels == half,
             "fuse_mul must map half-channels to half-channels"),
            (self.fuse_add.in_channels == half and self.fuse_add.out_channels == half,
             "fuse_add must map half-channels to half-channels"),
            (self.out_fuse.in_channels == 2 * half and self.out_fuse.out_channels == 2 * half,
             "out_fuse must map full channels to full channels"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    @property
    def top_channels(self) -> int:
        return self.out_fuse.out_channels

    @property
    def prior_channels(self) -> int:
        return self.align.in_channels

    @classmethod
    def seeded(
        cls,
        top_channels: int,
        prior_channels: int,
        inner_channels: int,
        rng: np.random.Generator,
    ) -> "SamfStage":
        if top_channels % 2 != 0:
            raise ValueError(f"top_channels must be even, got {top_channels}")
        half = top_channels // 2
        return cls(
            align=ConvParams.seeded(inner_channels, prior_channels, 1, rng),
            mul_branch=ConvParams.seeded(half, inner_channels, 1, rng),
            add_branch=ConvParams.seeded(half, inner_channels, 1, rng),
            add_norm=NormParams.seeded(half, rng),
            fuse_mul=ConvParams.seeded(half, half, 3, rng),
            fuse_add=ConvParams.seeded(half, half, 1, rng),
            out_fuse=ConvParams.seeded(top_channels, top_channels, 3, rng),
        )

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every trainable array, keyed for gradient dicts."""
        out: dict[str, np.ndarray] = {}
        for name in ("align", "mul_branch", "add_branch", "fuse_mul", "fuse_add", "out_fuse"):
            conv: ConvParams = getattr(self, name)
            out[f"{name}.weight"] = conv.weight
            out[f"{name}.bias"] = conv.bias
        out["add_norm.scale"] = self.add_norm.scale
        out["add_norm.shift"] = self.add_norm.shift
        return out


@dataclass
class SamfCache:
    """Intermediates retained by the forward pass for the reverse pass."""

    stage: SamfStage
    f_top: np.ndarray
    f_dino: np.ndarray
    aligned: np.ndarray
    prior: np.ndarray  # upsampled aligned prior
    gate: np.ndarray  # sigmoid output
    add_pre: np.ndarray  # add_branch conv output, before normalization
    add_bn: np.ndarray  # normalized, before relu
    add_map: np.ndarray  # relu output
    gated: np.ndarray  # F_A * gate
    shifted: np.ndarray  # F_B + add_map
    pre_out: np.ndarray  # concat(branches) + f_top


def samf_forward(
    f_top: np.ndarray, f_dino: np.ndarray, stage: SamfStage
) -> tuple[np.ndarray, SamfCache]:
    """Fuse a frozen prior into task features; returns (output, cache).

    Output shape equals ``f_top``'s shape. The channel count of ``f_top``
    must be even (it is split into two equal modulation paths).
    """
    f_top = np.asarray(f_top, dtype=np.float64)
    f_dino = np.asarray(f_dino, dtype=np.float64)
    channels, height, width = f_top.shape
    if channels % 2 != 0:
        raise ValueError(f"task features need an even channel count, got {channels}")
    if channels != stage.top_channels:
        raise ValueError(f"stage expects {stage.top_channels} task channels, got {channels}")
    if f_dino.shape[0] != stage.prior_channels:
        raise ValueError(f"stage expects {stage.prior_channels} prior channels, got {f_dino.shape[0]}")
    half = channels // 2

    aligned = conv2d(f_dino, stage.align)
    prior = bilinear_upsample(aligned, height, width)
    gate = sigmoid(conv2d(prior, stage.mul_branch))
    add_pre = conv2d(prior, stage.add_branch)
    add_bn = batchnorm_forward(add_pre, stage.add_norm)
    add_map = relu(add_bn)

    f_a, f_b = f_top[:half], f_top[half:]
    gated = f_a * gate
    shifted = f_b + add_map
    branch_mul = conv2d(gated, stage.fuse_mul)
    branch_add = conv2d(shifted, stage.fuse_add)
    pre_out = np.concatenate([branch_mul, branch_add], axis=0) + f_top
    out = conv2d(pre_out, stage.out_fuse)

    cache = SamfCache(
        stage=stage,
        f_top=f_top,
        f_dino=f_dino,
        aligned=aligned,
        prior=prior,
        gate=gate,
        add_pre=add_pre,
        add_bn=add_bn,
        add_map=add_map,
        gated=gated,
        shifted=shifted,
        pre_out=pre_out,
    )
    return out, cache


def samf_backward(grad_out: np.ndarray, cache: SamfCache) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Reverse pass: gradients for ``f_top`` and all stage parameters.

    The prior input is frozen, so no gradient is produced for ``f_dino``
    (the align convolution's own parameters still receive theirs).
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.f_top.shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match the cached forward output "
            f"{cache.f_top.shape}"
        )
    stage = cache.stage
    half = cache.f_top.shape[0] // 2
    grads: dict[str, np.ndarray] = {}

    grad_pre_out, grads["out_fuse.weight"], grads["out_fuse.bias"] = conv2d_backward(
        cache.pre_out, stage.out_fuse, grad_out
    )
    grad_branch_mul, grad_branch_add = grad_pre_out[:half], grad_pre_out[half:]

    grad_gated, grads["fuse_mul.weight"], grads["fuse_mul.bias"] = conv2d_backward(
        cache.gated, stage.fuse_mul, grad_branch_mul
    )
    grad_shifted, grads["fuse_add.weight"], grads["fuse_add.bias"] = conv2d_backward(
        cache.shifted, stage.fuse_add, grad_branch_add
    )

    f_a = cache.f_top[:half]
    grad_f_a = grad_gated * cache.gate
    grad_gate = grad_gated * f_a
    grad_f_b = grad_shifted
    grad_add_map = grad_shifted

    # Residual path contributes grad_pre_out to f_top directly.
    grad_f_top = np.concatenate([grad_f_a, grad_f_b], axis=0) + grad_pre_out

    grad_gate_pre = grad_gate * cache.gate * (1.0 - cache.gate)
    grad_prior_mul, grads["mul_branch.weight"], grads["mul_branch.bias"] = conv2d_backward(
        cache.prior, stage.mul_branch, grad_gate_pre
    )

    grad_add_bn = grad_add_map * (cache.add_bn > 0)
    grad_add_pre, grads["add_norm.scale"], grads["add_norm.shift"] = batchnorm_backward(
        cache.add_pre, stage.add_norm, grad_add_bn
    )
    grad_prior_add, grads["add_branch.weight"], grads["add_branch.bias"] = conv2d_backward(
        cache.prior, stage.add_branch, grad_add_pre
    )

    grad_prior = grad_prior_mul + grad_prior_add
    grad_aligned = bilinear_upsample_backward(
        grad_prior, cache.aligned.shape[1], cache.aligned.shape[2]
    )
    _, grads["align.weight"], grads["align.bias"] = conv2d_backward(
        cache.f_dino, stage.align, grad_aligned
    )
    return grad_f_top, grads


def stack_samf(f_top: np.ndarray, priors, stages) -> np.ndarray:
    """Apply fusion stages sequentially, one per prior tensor."""
    out, _ = stack_samf_with_caches(f_top, priors, stages)
    return out


def stack_samf_with_caches(f_top: np.ndarray, priors, stages) -> tuple[np.ndarray, list[SamfCache]]:
    priors = list(priors)
    stages = list(stages)
    if not priors:
        raise ValueError("stack needs at least one prior tensor")
    if len(priors) != len(stages):
        raise ValueError(f"got {len(priors)} priors but {len(stages)} stages")
    caches: list[SamfCache] = []
    current = f_top
    for prior, stage in zip(priors, stages):
        current, cache = samf_forward(current, prior, stage)
        caches.append(cache)
    return current, caches


def stack_samf_backward(
    grad_out: np.ndarray, caches: list[SamfCache]
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Reverse a whole stack; gradient keys are prefixed ``stage{k}.``."""
    grads: dict[str, np.ndarray] = {}
    grad = grad_out
    for index in range(len(caches) - 1, -1, -1):
        grad, stage_grads = samf_backward(grad, caches[index])
        for key, value in stage_grads.items():
            grads[f"stage{index}.{key}"] = value
    return grad, grads
