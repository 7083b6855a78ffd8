import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from deskswin import ops
from deskswin.checks import PRIMITIVE_TOL, _primitive_cases
from deskswin.gradcheck import finite_diff_check
from deskswin.tensor import ShapeError, Tensor

CASES = _primitive_cases(np.random.default_rng(7))


@pytest.mark.parametrize("name,f,inputs", CASES, ids=[c[0] for c in CASES])
def test_primitive_gradients(name, f, inputs):
    assert finite_diff_check(f, inputs) < PRIMITIVE_TOL


def _conv_loop(x, w, b, stride, pad):
    """Direct nested-loop convolution, the oracle for conv2d."""
    k = w.shape[0]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    bsz, h, wd, _ = xp.shape
    ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
    out = np.zeros((bsz, ho, wo, w.shape[3]))
    for n in range(bsz):
        for i in range(ho):
            for j in range(wo):
                patch = xp[n, i * stride:i * stride + k, j * stride:j * stride + k, :]
                out[n, i, j] = np.tensordot(patch, w, axes=([0, 1, 2], [0, 1, 2])) + b
    return out


@pytest.mark.parametrize("k,stride", [(1, 1), (3, 1), (3, 2)])
def test_conv2d_matches_loop(rng, k, stride):
    x = rng.standard_normal((2, 6, 6, 3))
    w = rng.standard_normal((k, k, 3, 4))
    b = rng.standard_normal(4)
    got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, k // 2).data
    np.testing.assert_allclose(got, _conv_loop(x, w, b, stride, k // 2), atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_batched_matmul_matches_numpy(rng):
    a, b = rng.standard_normal((3, 2, 4, 5)), rng.standard_normal((5, 6))
    np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, a @ b, atol=1e-12)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(x):
    s = ops.softmax(Tensor(x), axis=-1).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_survives_large_logits():
    s = ops.softmax(Tensor(np.array([1000.0, 1000.0, -1000.0])), axis=-1).data
    np.testing.assert_allclose(s, [0.5, 0.5, 0.0], atol=1e-12)


def test_bilinear_upsample_half_pixel_centres():
    x = np.arange(4.0).reshape(1, 1, 4, 1) * np.ones((1, 4, 1, 1))
    up = ops.bilinear_upsample2x(Tensor(x)).data[0, 0, :, 0]
    # output pixel j samples input coordinate (j + 0.5) / 2 - 0.5, clamped
    coords = np.clip((np.arange(8) + 0.5) / 2 - 0.5, 0, 3)
    np.testing.assert_allclose(up, coords, atol=1e-12)


def test_avg_pool_averages_blocks(rng):
    x = rng.standard_normal((1, 4, 4, 2))
    expect = x.reshape(1, 2, 2, 2, 2, 2).mean(axis=(2, 4))
    np.testing.assert_allclose(ops.avg_pool2x(Tensor(x)).data, expect, atol=1e-12)


def test_layer_norm_statistics(rng):
    y = ops.layer_norm(Tensor(rng.standard_normal((5, 16)) * 3 + 2)).data
    np.testing.assert_allclose(y.mean(axis=-1), 0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=-1), 1, atol=1e-4)


def test_instance_norm_is_per_sample_per_channel(rng):
    x = rng.standard_normal((2, 4, 4, 3)) * np.array([1.0, 5.0, 0.1]) + 7
    y = ops.instance_norm(Tensor(x)).data
    np.testing.assert_allclose(y.mean(axis=(1, 2)), 0, atol=1e-10)
    np.testing.assert_allclose(y.std(axis=(1, 2)), 1, atol=1e-3)


def test_softplus_is_stable_for_large_inputs():
    y = ops.softplus(Tensor(np.array([-800.0, 0.0, 800.0]))).data
    np.testing.assert_allclose(y, [0.0, np.log(2.0), 800.0], atol=1e-12)
