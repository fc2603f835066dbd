"""Co-optimized two-branch training contract with shared parameters.

Both branches share one encoder-decoder parameter set; the main branch
additionally routes its features through a fusion stage fed by a frozen
prior. The total objective is ``L_main + alpha * L_light`` and, because of
parameter sharing, each shared parameter's gradient is exactly
``g_main + alpha * g_light``. The per-branch loss here is a soft-Dice
surrogate: differentiable, bounded, and it exercises the same
gradient-sharing path as any segmentation loss would.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .primitives import ConvParams, conv2d, conv2d_backward, relu, sigmoid
from .samf import SamfStage, samf_backward, samf_forward

DICE_EPS = 1e-6


def soft_dice_loss(logits: np.ndarray, gt: np.ndarray, eps: float = DICE_EPS) -> tuple[float, np.ndarray]:
    """Soft-Dice loss on sigmoid(logits); returns (loss, d_loss/d_logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if logits.shape != gt.shape:
        raise ValueError(f"logits shape {logits.shape} != target shape {gt.shape}")
    probs = sigmoid(logits)
    overlap = float((probs * gt).sum())
    denom = float(probs.sum() + gt.sum() + eps)
    loss = 1.0 - 2.0 * overlap / denom
    # d/dp of -2*sum(p*g)/denom, with denom depending on sum(p).
    grad_probs = -(2.0 * gt * denom - 2.0 * overlap) / (denom * denom)
    grad_logits = grad_probs * probs * (1.0 - probs)
    return loss, grad_logits


def co_isd_loss(
    y_main: np.ndarray,
    y_light: np.ndarray,
    y_gt: np.ndarray,
    alpha: float = 1.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed two-branch loss; returns (loss, grad_y_main, grad_y_light)."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha!r}")
    y_main = np.asarray(y_main, dtype=np.float64)
    y_light = np.asarray(y_light, dtype=np.float64)
    if y_main.shape != y_light.shape:
        raise ValueError(f"branch output shapes differ: {y_main.shape} vs {y_light.shape}")
    loss_main, grad_main = soft_dice_loss(y_main, y_gt)
    loss_light, grad_light = soft_dice_loss(y_light, y_gt)
    return loss_main + alpha * loss_light, grad_main, alpha * grad_light


def shared_grad_accumulate(
    grads_main: dict[str, np.ndarray],
    grads_light: dict[str, np.ndarray],
    alpha: float = 1.0,
) -> dict[str, np.ndarray]:
    """Per-parameter gradient of the summed loss under parameter sharing."""
    if set(grads_main) != set(grads_light):
        missing = set(grads_main) ^ set(grads_light)
        raise ValueError(f"gradient sets cover different parameters: {sorted(missing)}")
    return {key: grads_main[key] + alpha * grads_light[key] for key in grads_main}


@dataclass
class SharedEncoderDecoder:
    """Tiny shared encoder-decoder with a fusion stage on the main branch.

    ``enc``/``dec_hidden``/``dec_out`` are shared between branches; the
    fusion stage belongs to the main branch only and consumes a frozen
    prior tensor.
    """

    enc: ConvParams  # 3x3: in_channels -> channels
    dec_hidden: ConvParams  # 3x3: channels -> channels
    dec_out: ConvParams  # 1x1: channels -> 1
    fusion: SamfStage

    SHARED = ("enc", "dec_hidden", "dec_out")

    @classmethod
    def seeded(
        cls,
        rng: np.random.Generator,
        in_channels: int = 1,
        channels: int = 4,
        prior_channels: int = 3,
        inner_channels: int = 3,
    ) -> "SharedEncoderDecoder":
        return cls(
            enc=ConvParams.seeded(channels, in_channels, 3, rng),
            dec_hidden=ConvParams.seeded(channels, channels, 3, rng),
            dec_out=ConvParams.seeded(1, channels, 1, rng),
            fusion=SamfStage.seeded(channels, prior_channels, inner_channels, rng),
        )

    def shared_parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name in self.SHARED:
            conv: ConvParams = getattr(self, name)
            out[f"{name}.weight"] = conv.weight
            out[f"{name}.bias"] = conv.bias
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        out = self.shared_parameters()
        for key, value in self.fusion.parameters().items():
            out[f"fusion.{key}"] = value
        return out

    def forward_main(self, x: np.ndarray, prior: np.ndarray) -> tuple[np.ndarray, dict]:
        feat_pre = conv2d(x, self.enc)
        feat = relu(feat_pre)
        fused, fusion_cache = samf_forward(feat, prior, self.fusion)
        hidden_pre = conv2d(fused, self.dec_hidden)
        hidden = relu(hidden_pre)
        y = conv2d(hidden, self.dec_out)
        cache = {
            "x": x,
            "feat_pre": feat_pre,
            "feat": feat,
            "fused": fused,
            "fusion_cache": fusion_cache,
            "hidden_pre": hidden_pre,
            "hidden": hidden,
        }
        return y, cache

    def forward_light(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        feat_pre = conv2d(x, self.enc)
        feat = relu(feat_pre)
        hidden_pre = conv2d(feat, self.dec_hidden)
        hidden = relu(hidden_pre)
        y = conv2d(hidden, self.dec_out)
        cache = {
            "x": x,
            "feat_pre": feat_pre,
            "feat": feat,
            "hidden_pre": hidden_pre,
            "hidden": hidden,
        }
        return y, cache

    def backward_main(self, grad_y: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        grad_hidden, grads["dec_out.weight"], grads["dec_out.bias"] = conv2d_backward(
            cache["hidden"], self.dec_out, grad_y
        )
        grad_hidden_pre = grad_hidden * (cache["hidden_pre"] > 0)
        grad_fused, grads["dec_hidden.weight"], grads["dec_hidden.bias"] = conv2d_backward(
            cache["fused"], self.dec_hidden, grad_hidden_pre
        )
        grad_feat, fusion_grads = samf_backward(grad_fused, cache["fusion_cache"])
        for key, value in fusion_grads.items():
            grads[f"fusion.{key}"] = value
        grad_feat_pre = grad_feat * (cache["feat_pre"] > 0)
        _, grads["enc.weight"], grads["enc.bias"] = conv2d_backward(
            cache["x"], self.enc, grad_feat_pre
        )
        return grads

    def backward_light(self, grad_y: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        grad_hidden, grads["dec_out.weight"], grads["dec_out.bias"] = conv2d_backward(
            cache["hidden"], self.dec_out, grad_y
        )
        grad_hidden_pre = grad_hidden * (cache["hidden_pre"] > 0)
        grad_feat, grads["dec_hidden.weight"], grads["dec_hidden.bias"] = conv2d_backward(
            cache["feat"], self.dec_hidden, grad_hidden_pre
        )
        grad_feat_pre = grad_feat * (cache["feat_pre"] > 0)
        _, grads["enc.weight"], grads["enc.bias"] = conv2d_backward(
            cache["x"], self.enc, grad_feat_pre
        )
        return grads

    def training_gradients(
        self, x: np.ndarray, prior: np.ndarray, gt: np.ndarray, alpha: float = 1.0
    ) -> tuple[float, dict[str, np.ndarray], dict[str, np.ndarray], dict[str, np.ndarray]]:
        """One optimization step's worth of gradients.

        Returns (total_loss, accumulated_shared_grads, grads_main,
        grads_light). Per-branch gradients are unweighted; the alpha factor
        is applied by the accumulation step. Fusion-stage gradients ride
        along inside the main dict under the ``fusion.`` prefix.
        """
        y_main, cache_main = self.forward_main(x, prior)
        y_light, cache_light = self.forward_light(x)
        loss_main, grad_y_main = soft_dice_loss(y_main, gt)
        loss_light, grad_y_light = soft_dice_loss(y_light, gt)
        grads_main = self.backward_main(grad_y_main, cache_main)
        grads_light = self.backward_light(grad_y_light, cache_light)
        shared_keys = self.shared_parameters().keys()
        main_shared = {k: grads_main[k] for k in shared_keys}
        shared = shared_grad_accumulate(main_shared, grads_light, alpha)
        return loss_main + alpha * loss_light, shared, grads_main, grads_light


def total_loss_at(
    model: SharedEncoderDecoder,
    x: np.ndarray,
    prior: np.ndarray,
    gt: np.ndarray,
    alpha: float = 1.0,
) -> float:
    """Total two-branch loss for the current parameter values."""
    y_main, _ = model.forward_main(x, prior)
    y_light, _ = model.forward_light(x)
    loss, _, _ = co_isd_loss(y_main, y_light, gt, alpha)
    return loss


def finite_difference_gradient(
    loss_fn, params: dict[str, np.ndarray], step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of the parameters.

    Perturbs every array element in place, so ``params`` must be live views
    of the model's storage.
    """
    grads: dict[str, np.ndarray] = {}
    for key, array in params.items():
        grad = np.zeros_like(array)
        flat = array.ravel()
        grad_flat = grad.ravel()
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            hi = loss_fn()
            flat[i] = original - step
            lo = loss_fn()
            flat[i] = original
            grad_flat[i] = (hi - lo) / (2.0 * step)
        grads[key] = grad
    return grads


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _global_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    """Worst deviation normalized by the largest gradient component overall.

    Whole-vector normalization is the meaningful scale for a deep composite:
    individual arrays whose true gradients sit near the double-precision
    difference-quotient floor would otherwise dominate the comparison with
    pure roundoff noise.
    """
    worst = 0.0
    scale = 1e-12
    for key in numeric:
        worst = max(worst, float(np.max(np.abs(analytic[key] - numeric[key]))))
        scale = max(
            scale, float(np.max(np.abs(analytic[key]))), float(np.max(np.abs(numeric[key])))
        )
    return worst / scale


def run_invariant_suite(seed: int = 7, fd_tol: float = 1e-4) -> list[tuple[str, bool, str]]:
    """Self-contained invariant checks, reported as (name, passed, detail).

    Covers gate ranges, shape preservation, the frozen-prior contract,
    finite-difference agreement of a full stage plus the shared-branch
    model, and the accumulation identities of the two-branch objective.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    results: list[tuple[str, bool, str]] = []

    # Gate ranges and shape preservation over a grid of toy shapes.
    gate_ok, shape_ok = True, True
    worst = ""
    for channels, height, width, ph, pw in ((2, 5, 7, 3, 4), (4, 8, 6, 5, 5), (6, 9, 9, 4, 3)):
        stage = SamfStage.seeded(channels, 3, 3, rng)
        f_top = rng.normal(size=(channels, height, width))
        prior = rng.normal(size=(3, ph, pw))
        out, cache = samf_forward(f_top, prior, stage)
        if not (np.all(cache.gate > 0) and np.all(cache.gate < 1) and np.all(cache.add_map >= 0)):
            gate_ok = False
        if out.shape != f_top.shape:
            shape_ok = False
            worst = f"{out.shape} != {f_top.shape}"
    results.append(("gate outputs in (0,1), additive map >= 0", gate_ok, ""))
    results.append(("output shape equals task feature shape", shape_ok, worst))

    # Frozen prior: backward yields no gradient entry for the prior input.
    stage = SamfStage.seeded(4, 3, 3, rng)
    f_top = rng.normal(size=(4, 6, 6))
    prior = rng.normal(size=(3, 3, 3))
    out, cache = samf_forward(f_top, prior, stage)
    _, grads = samf_backward(np.ones_like(out), cache)
    frozen_ok = not any("dino" in k or "prior" in k for k in grads) and set(grads) == set(
        stage.parameters()
    )
    results.append(("no gradient is produced for the frozen prior", frozen_ok, ""))

    # Finite differences on one full stage.
    def stage_loss() -> float:
        value, _ = samf_forward(f_top, prior, stage)
        return float(np.sum(value * probe))

    probe = rng.normal(size=out.shape)
    out, cache = samf_forward(f_top, prior, stage)
    _, analytic = samf_backward(probe, cache)
    numeric = finite_difference_gradient(stage_loss, stage.parameters())
    stage_err = max(_relative_error(analytic[k], numeric[k]) for k in analytic)
    results.append(
        ("stage gradients match central differences", stage_err < fd_tol, f"max rel err {stage_err:.2e}")
    )

    # Two-branch contract: alpha scaling, accumulation, finite differences.
    model = SharedEncoderDecoder.seeded(rng)
    x = rng.normal(size=(1, 6, 6))
    model_prior = rng.normal(size=(3, 3, 3))
    gt = (rng.uniform(size=(1, 6, 6)) > 0.7).astype(np.float64)

    _, shared_zero, grads_main_zero, _ = model.training_gradients(x, model_prior, gt, alpha=0.0)
    zero_ok = all(np.array_equal(shared_zero[k], grads_main_zero[k]) for k in shared_zero)
    results.append(("alpha = 0 removes the light-branch contribution", zero_ok, ""))

    _, shared, grads_main, grads_light = model.training_gradients(x, model_prior, gt, alpha=1.0)
    sum_ok = all(
        np.array_equal(shared[k], grads_main[k] + grads_light[k]) for k in shared
    )
    results.append(("shared gradient equals g_main + g_light exactly", sum_ok, ""))

    numeric = finite_difference_gradient(
        lambda: total_loss_at(model, x, model_prior, gt, alpha=1.0), model.parameters()
    )
    analytic_all = dict(shared)
    for key in model.parameters():
        if key.startswith("fusion."):
            analytic_all[key] = grads_main[key]
    model_err = _global_relative_error(analytic_all, numeric)
    results.append(
        (
            "shared-model gradients match central differences",
            model_err < fd_tol,
            f"max rel err {model_err:.2e}",
        )
    )
    return results
