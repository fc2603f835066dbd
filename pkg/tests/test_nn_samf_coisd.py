import numpy as np
import pytest

from sirsteval.nn import (
    SamfStage,
    SharedEncoderDecoder,
    co_isd_loss,
    conv2d,
    samf_backward,
    samf_forward,
    shared_grad_accumulate,
    soft_dice_loss,
    stack_samf,
)
from sirsteval.nn.coisd import total_loss_at
from sirsteval.nn.samf import stack_samf_backward, stack_samf_with_caches

from oracles import central_difference_grads, global_relative_error, max_relative_error

FD_TOL = 1e-4


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


# --- forward structure ----------------------------------------------------------

def test_samf_output_shape_matches_input():
    rng = rng_for(0)
    for channels, h, w, ph, pw in ((4, 6, 8, 3, 3), (8, 12, 12, 5, 4), (6, 7, 7, 7, 7)):
        stage = SamfStage.seeded(channels, 3, 4, rng)
        f_top = rng.normal(size=(channels, h, w))
        prior = rng.normal(size=(3, ph, pw))
        out, _ = samf_forward(f_top, prior, stage)
        assert out.shape == f_top.shape


def test_samf_rejects_odd_channels():
    rng = rng_for(1)
    with pytest.raises(ValueError):
        SamfStage.seeded(5, 3, 4, rng)
    stage = SamfStage.seeded(4, 3, 4, rng)
    with pytest.raises(ValueError):
        samf_forward(rng.normal(size=(6, 5, 5)), rng.normal(size=(3, 3, 3)), stage)


def test_samf_gate_properties():
    rng = rng_for(2)
    stage = SamfStage.seeded(6, 3, 4, rng)
    _, cache = samf_forward(rng.normal(size=(6, 9, 9)), rng.normal(size=(3, 4, 4)), stage)
    assert np.all(cache.gate > 0.0)
    assert np.all(cache.gate < 1.0)
    assert np.all(cache.add_map >= 0.0)


def test_samf_zero_gate_preactivation_halves_first_branch():
    # When the gating conv is zeroed, the gate is sigmoid(0) = 0.5 everywhere,
    # so the multiplicative branch sees exactly 0.5 * F_A.
    rng = rng_for(3)
    stage = SamfStage.seeded(4, 3, 4, rng)
    stage.mul_branch.weight[:] = 0.0
    stage.mul_branch.bias[:] = 0.0
    f_top = rng.normal(size=(4, 6, 6))
    _, cache = samf_forward(f_top, rng.normal(size=(3, 3, 3)), stage)
    assert np.allclose(cache.gate, 0.5)
    assert np.allclose(cache.gated, 0.5 * f_top[:2])
    expected_branch = conv2d(0.5 * f_top[:2], stage.fuse_mul)
    assert np.allclose(conv2d(cache.gated, stage.fuse_mul), expected_branch)


def test_samf_matches_primitive_composition_oracle():
    # Chain the primitives by hand and compare against the fused forward.
    from sirsteval.nn import batchnorm_forward, bilinear_upsample, relu, sigmoid

    rng = rng_for(4)
    stage = SamfStage.seeded(6, 2, 3, rng)
    f_top = rng.normal(size=(6, 8, 8))
    prior = rng.normal(size=(2, 4, 4))
    out, _ = samf_forward(f_top, prior, stage)

    aligned = bilinear_upsample(conv2d(prior, stage.align), 8, 8)
    gate = sigmoid(conv2d(aligned, stage.mul_branch))
    add_map = relu(batchnorm_forward(conv2d(aligned, stage.add_branch), stage.add_norm))
    branch_mul = conv2d(f_top[:3] * gate, stage.fuse_mul)
    branch_add = conv2d(f_top[3:] + add_map, stage.fuse_add)
    want = conv2d(np.concatenate([branch_mul, branch_add]) + f_top, stage.out_fuse)
    assert max_relative_error(out, want) < 1e-12


def test_stack_single_stage_equals_samf_forward():
    rng = rng_for(5)
    stage = SamfStage.seeded(4, 3, 3, rng)
    f_top = rng.normal(size=(4, 6, 6))
    prior = rng.normal(size=(3, 3, 3))
    assert np.array_equal(stack_samf(f_top, [prior], [stage]), samf_forward(f_top, prior, stage)[0])


def test_stack_four_stages_equals_manual_chain():
    rng = rng_for(6)
    stages = [SamfStage.seeded(4, 3, 3, rng) for _ in range(4)]
    priors = [rng.normal(size=(3, 3 + i, 3 + i)) for i in range(4)]
    f_top = rng.normal(size=(4, 10, 10))
    got = stack_samf(f_top, priors, stages)
    current = f_top
    for prior, stage in zip(priors, stages):
        current, _ = samf_forward(current, prior, stage)
    assert np.array_equal(got, current)
    assert got.shape == f_top.shape


def test_stack_arity_mismatch():
    rng = rng_for(7)
    stage = SamfStage.seeded(4, 3, 3, rng)
    with pytest.raises(ValueError):
        stack_samf(rng.normal(size=(4, 6, 6)), [rng.normal(size=(3, 3, 3))], [stage, stage])
    with pytest.raises(ValueError):
        stack_samf(rng.normal(size=(4, 6, 6)), [], [])


# --- backward -----------------------------------------------------------------

def test_samf_backward_zero_grad_gives_zero():
    rng = rng_for(8)
    stage = SamfStage.seeded(4, 3, 3, rng)
    out, cache = samf_forward(rng.normal(size=(4, 6, 6)), rng.normal(size=(3, 3, 3)), stage)
    grad_f_top, grads = samf_backward(np.zeros_like(out), cache)
    assert np.all(grad_f_top == 0)
    assert all(np.all(g == 0) for g in grads.values())


def test_samf_backward_shape_mismatch_raises():
    rng = rng_for(9)
    stage = SamfStage.seeded(4, 3, 3, rng)
    out, cache = samf_forward(rng.normal(size=(4, 6, 6)), rng.normal(size=(3, 3, 3)), stage)
    with pytest.raises(ValueError):
        samf_backward(np.zeros((4, 7, 7)), cache)


def test_samf_backward_no_prior_gradient():
    rng = rng_for(10)
    stage = SamfStage.seeded(4, 3, 3, rng)
    out, cache = samf_forward(rng.normal(size=(4, 6, 6)), rng.normal(size=(3, 3, 3)), stage)
    _, grads = samf_backward(np.ones_like(out), cache)
    assert set(grads) == set(stage.parameters())


def test_samf_parameter_gradients_match_finite_differences():
    rng = rng_for(11)
    stage = SamfStage.seeded(4, 3, 3, rng)
    f_top = rng.normal(size=(4, 6, 6))
    prior = rng.normal(size=(3, 3, 3))
    probe = rng.normal(size=(4, 6, 6))

    out, cache = samf_forward(f_top, prior, stage)
    _, analytic = samf_backward(probe, cache)

    numeric = central_difference_grads(
        lambda: float(np.sum(samf_forward(f_top, prior, stage)[0] * probe)),
        stage.parameters(),
    )
    for key in analytic:
        assert max_relative_error(analytic[key], numeric[key]) < FD_TOL, key


def test_samf_input_gradient_matches_finite_differences():
    rng = rng_for(12)
    stage = SamfStage.seeded(4, 5, 5, rng)
    f_top = rng.normal(size=(4, 5, 5))
    prior = rng.normal(size=(5, 3, 3))
    probe = rng.normal(size=(4, 5, 5))
    out, cache = samf_forward(f_top, prior, stage)
    grad_f_top, _ = samf_backward(probe, cache)
    numeric = central_difference_grads(
        lambda: float(np.sum(samf_forward(f_top, prior, stage)[0] * probe)),
        {"f_top": f_top},
    )
    assert max_relative_error(grad_f_top, numeric["f_top"]) < FD_TOL


# --- losses and sharing ----------------------------------------------------------

def test_soft_dice_gradient_matches_finite_differences():
    rng = rng_for(13)
    logits = rng.normal(size=(1, 5, 5))
    gt = (rng.uniform(size=(1, 5, 5)) > 0.7).astype(np.float64)
    _, grad = soft_dice_loss(logits, gt)
    numeric = central_difference_grads(lambda: soft_dice_loss(logits, gt)[0], {"logits": logits})
    assert max_relative_error(grad, numeric["logits"]) < FD_TOL


def test_co_isd_loss_alpha_zero_and_symmetry():
    rng = rng_for(14)
    y = rng.normal(size=(1, 4, 4))
    gt = (rng.uniform(size=(1, 4, 4)) > 0.5).astype(np.float64)
    loss, gm, gl = co_isd_loss(y, y + 1.0, gt, alpha=0.0)
    assert np.all(gl == 0)
    assert loss == soft_dice_loss(y, gt)[0]
    loss1, gm1, gl1 = co_isd_loss(y, y, gt, alpha=1.0)
    assert np.array_equal(gm1, gl1)
    with pytest.raises(ValueError):
        co_isd_loss(y, y, gt, alpha=-0.5)
    with pytest.raises(ValueError):
        co_isd_loss(y, rng.normal(size=(1, 5, 5)), gt)


def test_co_isd_gradients_match_finite_differences():
    rng = rng_for(15)
    y_main = rng.normal(size=(1, 4, 4))
    y_light = rng.normal(size=(1, 4, 4))
    gt = (rng.uniform(size=(1, 4, 4)) > 0.6).astype(np.float64)
    _, gm, gl = co_isd_loss(y_main, y_light, gt, alpha=0.7)
    numeric = central_difference_grads(
        lambda: co_isd_loss(y_main, y_light, gt, alpha=0.7)[0],
        {"y_main": y_main, "y_light": y_light},
    )
    assert max_relative_error(gm, numeric["y_main"]) < FD_TOL
    assert max_relative_error(gl, numeric["y_light"]) < FD_TOL


def test_shared_grad_accumulate_identities():
    rng = rng_for(16)
    g = {k: rng.normal(size=(3, 3)) for k in ("a", "b")}
    zeros = {k: np.zeros((3, 3)) for k in ("a", "b")}
    out = shared_grad_accumulate(g, zeros, alpha=1.0)
    assert all(np.array_equal(out[k], g[k]) for k in g)
    doubled = shared_grad_accumulate(g, g, alpha=1.0)
    assert all(np.array_equal(doubled[k], 2 * g[k]) for k in g)
    with pytest.raises(ValueError):
        shared_grad_accumulate(g, {"a": g["a"]}, alpha=1.0)


def test_shared_grad_accumulate_linearity():
    rng = rng_for(17)
    keys = ("w", "v")
    a, b, c, d = ({k: rng.normal(size=4) for k in keys} for _ in range(4))
    alpha = 0.6
    lhs = {
        k: shared_grad_accumulate(a, b, alpha)[k] + shared_grad_accumulate(c, d, alpha)[k]
        for k in keys
    }
    rhs = shared_grad_accumulate(
        {k: a[k] + c[k] for k in keys}, {k: b[k] + d[k] for k in keys}, alpha
    )
    for k in keys:
        assert np.allclose(lhs[k], rhs[k], atol=1e-15)


def test_shared_model_accumulated_grads_match_sum_and_fd():
    rng = rng_for(18)
    model = SharedEncoderDecoder.seeded(rng)
    x = rng.normal(size=(1, 6, 6))
    prior = rng.normal(size=(3, 3, 3))
    gt = (rng.uniform(size=(1, 6, 6)) > 0.7).astype(np.float64)

    _, shared, grads_main, grads_light = model.training_gradients(x, prior, gt, alpha=1.0)
    for key in shared:
        assert np.max(np.abs(shared[key] - (grads_main[key] + grads_light[key]))) <= 1e-12

    numeric = central_difference_grads(
        lambda: total_loss_at(model, x, prior, gt, alpha=1.0), model.parameters()
    )
    analytic = dict(shared)
    for key in model.parameters():
        if key.startswith("fusion."):
            analytic[key] = grads_main[key]
    # Whole-vector normalization: arrays whose true gradients sit near the
    # difference-quotient noise floor must not dominate the comparison.
    assert global_relative_error(analytic, numeric) < FD_TOL


def test_shared_model_alpha_zero_drops_light_branch():
    rng = rng_for(19)
    model = SharedEncoderDecoder.seeded(rng)
    x = rng.normal(size=(1, 5, 5))
    prior = rng.normal(size=(3, 3, 3))
    gt = (rng.uniform(size=(1, 5, 5)) > 0.6).astype(np.float64)
    _, shared, grads_main, _ = model.training_gradients(x, prior, gt, alpha=0.0)
    for key in shared:
        assert np.array_equal(shared[key], grads_main[key])


def test_stack_backward_matches_finite_differences():
    rng = rng_for(20)
    stages = [SamfStage.seeded(4, 3, 3, rng) for _ in range(2)]
    priors = [rng.normal(size=(3, 3, 3)), rng.normal(size=(3, 4, 4))]
    f_top = rng.normal(size=(4, 6, 6))
    probe = rng.normal(size=(4, 6, 6))
    out, caches = stack_samf_with_caches(f_top, priors, stages)
    _, analytic = stack_samf_backward(probe, caches)

    params = {}
    for i, stage in enumerate(stages):
        for key, value in stage.parameters().items():
            params[f"stage{i}.{key}"] = value
    numeric = central_difference_grads(
        lambda: float(np.sum(stack_samf(f_top, priors, stages) * probe)), params
    )
    for key in numeric:
        assert max_relative_error(analytic[key], numeric[key]) < FD_TOL, key
