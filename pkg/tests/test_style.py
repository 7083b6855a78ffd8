import warnings

import numpy as np
import pytest

from deskswin.attention import ConfigError
from deskswin.style import (CrossAttentionStyle, MappingNetwork, ModulatedMLP, StyleAffine,
                            StyleNorm, StyleVariant, ada_norm, adain, modulated_linear)
from deskswin.tensor import Tensor


def test_mapping_network_shape_and_depth(rng):
    net = MappingNetwork(16, 12, depth=8, rng=rng)
    assert len(net.layers) == 8
    assert net(Tensor(rng.standard_normal((3, 16)))).shape == (3, 12)


def test_adain_sets_channel_statistics(rng):
    x = rng.standard_normal((2, 8, 8, 4)) * 3 + 1
    gamma = rng.uniform(0.5, 2.0, (2, 4))
    beta = rng.standard_normal((2, 4))
    y = adain(Tensor(x), Tensor(gamma), Tensor(beta)).data
    np.testing.assert_allclose(y.mean(axis=(1, 2)), beta, atol=1e-10)
    np.testing.assert_allclose(y.std(axis=(1, 2)), gamma, rtol=1e-3)


def test_adain_ignores_input_scale_and_shift(rng):
    x = rng.standard_normal((1, 4, 4, 3))
    g, b = Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 3)))
    y1 = adain(Tensor(x), g, b).data
    y2 = adain(Tensor(5 * x + 3), g, b).data
    np.testing.assert_allclose(y1, y2, rtol=1e-4, atol=1e-6)  # eps = 1e-5 in the variance


def test_adaln_normalizes_over_channels(rng):
    x = rng.standard_normal((2, 4, 4, 6)) * 4
    y = ada_norm(Tensor(x), "adaln", Tensor(np.ones((2, 6))), Tensor(np.zeros((2, 6)))).data
    np.testing.assert_allclose(y.mean(axis=-1), 0, atol=1e-10)


def test_adabn_normalizes_over_batch(rng):
    x = rng.standard_normal((4, 4, 4, 3)) * 2 + 5
    y = ada_norm(Tensor(x), "adabn", Tensor(np.ones((4, 3))), Tensor(np.zeros((4, 3)))).data
    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), 0, atol=1e-10)


def test_adabn_batch_of_one_warns(rng):
    x = Tensor(rng.standard_normal((1, 4, 4, 3)))
    with pytest.warns(UserWarning):
        ada_norm(x, "adabn", Tensor(np.ones((1, 3))), Tensor(np.zeros((1, 3))))


def test_adarmsnorm_is_scale_only(rng):
    x = rng.standard_normal((2, 4, 4, 6))
    gamma = rng.uniform(0.5, 2.0, (2, 6))
    y = ada_norm(Tensor(x), "adarmsnorm", Tensor(gamma)).data
    rms = np.sqrt((x ** 2).mean(axis=-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(y, x / rms * gamma[:, None, None, :], atol=1e-10)


def test_style_affine_starts_at_identity(rng):
    aff = StyleAffine(8, 5, rng=rng)
    aff.weight.data[:] = 0
    gamma, beta = aff(Tensor(rng.standard_normal((2, 8))))
    np.testing.assert_array_equal(gamma.data, 1.0)
    np.testing.assert_array_equal(beta.data, 0.0)


@pytest.mark.parametrize("variant", [v.value for v in StyleVariant])
def test_style_norm_every_variant_runs(rng, variant):
    norm = StyleNorm(6, 4, variant, rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        y = norm(Tensor(rng.standard_normal((2, 4, 4, 6))), Tensor(rng.standard_normal((2, 4))))
    assert y.shape == (2, 4, 4, 6)
    assert np.isfinite(y.data).all()


def test_non_adanorm_variant_rejected_by_ada_norm(rng):
    with pytest.raises(ConfigError):
        ada_norm(Tensor(np.ones((1, 2, 2, 2))), "none", Tensor(np.ones((1, 2))))


def test_modulated_linear_demodulates_columns(rng):
    """With unit-variance input the per-sample weight columns have unit norm."""
    w = rng.standard_normal((6, 4))
    s = rng.uniform(0.5, 2.0, (3, 6))
    x = np.eye(6)[None].repeat(3, axis=0)
    y = modulated_linear(Tensor(x), Tensor(w), Tensor(s)).data
    np.testing.assert_allclose(np.linalg.norm(y, axis=1), 1.0, atol=1e-6)


def test_modulated_mlp_shapes(rng):
    mlp = ModulatedMLP(6, 12, 4, rng)
    assert mlp(Tensor(rng.standard_normal((2, 3, 3, 6))),
               Tensor(rng.standard_normal((2, 4)))).shape == (2, 3, 3, 6)


def test_cross_attention_is_residual(rng):
    ca = CrossAttentionStyle(8, 4, 2, n_tokens=3, rng=rng)
    ca.out.weight.data[:] = 0
    x = rng.standard_normal((2, 4, 4, 8))
    np.testing.assert_allclose(ca(Tensor(x), Tensor(rng.standard_normal((2, 4)))).data, x)


def test_cross_attention_needs_tokens():
    with pytest.raises(ConfigError):
        CrossAttentionStyle(8, 4, 2, n_tokens=0)
