import numpy as np
import pytest

from sirsteval.nn import (
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

from oracles import max_relative_error, naive_bilinear, naive_conv


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


# --- convolution ---------------------------------------------------------------

def test_conv_identity_1x1():
    x = rng_for(0).normal(size=(3, 5, 5))
    p = ConvParams(weight=np.eye(3).reshape(3, 3, 1, 1), bias=np.zeros(3))
    assert np.allclose(conv2d(x, p), x)


def test_conv_zero_kernel_gives_bias():
    x = rng_for(1).normal(size=(2, 4, 4))
    p = ConvParams(weight=np.zeros((3, 2, 3, 3)), bias=np.array([1.0, -2.0, 0.5]))
    y = conv2d(x, p)
    for o, b in enumerate(p.bias):
        assert np.all(y[o] == b)


def test_conv_matches_naive_loop_oracle():
    rng = rng_for(2)
    x = rng.normal(size=(4, 5, 5))
    for k in (1, 3):
        p = ConvParams.seeded(3, 4, k, rng)
        assert max_relative_error(conv2d(x, p), naive_conv(x, p.weight, p.bias)) < 1e-12


def test_conv_channel_mismatch():
    p = ConvParams.seeded(2, 3, 1, rng_for(3))
    with pytest.raises(ValueError):
        conv2d(np.zeros((4, 4, 4)), p)


def test_conv_backward_is_exact_adjoint():
    # <conv(x), gy> == <x, conv_backward_input(gy)> for a linear map
    rng = rng_for(4)
    x = rng.normal(size=(3, 6, 6))
    p = ConvParams.seeded(2, 3, 3, rng)
    p_nobias = ConvParams(weight=p.weight, bias=np.zeros(2))
    gy = rng.normal(size=(2, 6, 6))
    gx, _, _ = conv2d_backward(x, p_nobias, gy)
    assert np.sum(conv2d(x, p_nobias) * gy) == pytest.approx(np.sum(x * gx), rel=1e-12)


def test_conv_backward_matches_finite_differences():
    rng = rng_for(5)
    x = rng.normal(size=(2, 5, 5))
    p = ConvParams.seeded(3, 2, 3, rng)
    probe = rng.normal(size=(3, 5, 5))
    gx, gw, gb = conv2d_backward(x, p, probe)

    step = 1e-6
    fd_x = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        saved = x[idx]
        x[idx] = saved + step
        hi = np.sum(conv2d(x, p) * probe)
        x[idx] = saved - step
        lo = np.sum(conv2d(x, p) * probe)
        x[idx] = saved
        fd_x[idx] = (hi - lo) / (2 * step)
        it.iternext()
    assert max_relative_error(gx, fd_x) < 1e-6


# --- bilinear upsampling ----------------------------------------------------------

def test_bilinear_identity_at_same_size():
    x = rng_for(6).normal(size=(2, 4, 5))
    assert np.array_equal(bilinear_upsample(x, 4, 5), x)


def test_bilinear_constant_stays_constant():
    x = np.full((1, 3, 3), 2.5)
    y = bilinear_upsample(x, 7, 9)
    assert np.allclose(y, 2.5)


def test_bilinear_2x2_to_4x4_matches_formula_oracle():
    x = np.array([[[0.0, 1.0], [2.0, 3.0]]])
    got = bilinear_upsample(x, 4, 4)
    want = naive_bilinear(x, 4, 4)
    assert max_relative_error(got, want) < 1e-15
    # hand application of the coordinate formula: output (1,1) samples source
    # (0.25, 0.25): 0.75*(0.75*0 + 0.25*1) + 0.25*(0.75*2 + 0.25*3) = 0.75
    assert got[0, 1, 1] == pytest.approx(0.75)
    # corners clamp onto the corner samples
    assert got[0, 0, 0] == 0.0
    assert got[0, 3, 3] == 3.0


def test_bilinear_arbitrary_sizes_match_oracle():
    rng = rng_for(7)
    for shape, out in (((2, 3, 4), (7, 9)), ((1, 5, 5), (8, 11)), ((3, 2, 2), (5, 4))):
        x = rng.normal(size=shape)
        assert max_relative_error(bilinear_upsample(x, *out), naive_bilinear(x, *out)) < 1e-12


def test_bilinear_rejects_bad_targets():
    x = np.zeros((1, 4, 4))
    with pytest.raises(ValueError):
        bilinear_upsample(x, 0, 4)
    with pytest.raises(ValueError):
        bilinear_upsample(x, 2, 4)  # downsampling not supported


def test_bilinear_backward_is_exact_adjoint():
    rng = rng_for(8)
    x = rng.normal(size=(2, 3, 4))
    gy = rng.normal(size=(2, 7, 9))
    y = bilinear_upsample(x, 7, 9)
    gx = bilinear_upsample_backward(gy, 3, 4)
    assert np.sum(y * gy) == pytest.approx(np.sum(x * gx), rel=1e-12)


# --- activations and normalization --------------------------------------------

def test_sigmoid_relu_basics():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert np.all(sigmoid(np.array([-50.0, 50.0])) == pytest.approx([0.0, 1.0], abs=1e-15))
    assert relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]


def test_batchnorm_forward_backward():
    rng = rng_for(9)
    p = NormParams.seeded(3, rng)
    x = rng.normal(size=(3, 4, 4))
    y = batchnorm_forward(x, p)
    inv = 1 / np.sqrt(p.running_var + p.epsilon)
    want = (x - p.running_mean[:, None, None]) * (p.scale * inv)[:, None, None] + p.shift[:, None, None]
    assert np.allclose(y, want)

    gy = rng.normal(size=(3, 4, 4))
    gx, gscale, gshift = batchnorm_backward(x, p, gy)
    assert np.allclose(gx, gy * (p.scale * inv)[:, None, None])
    assert np.allclose(gshift, gy.sum(axis=(1, 2)))
    x_hat = (x - p.running_mean[:, None, None]) * inv[:, None, None]
    assert np.allclose(gscale, (gy * x_hat).sum(axis=(1, 2)))
