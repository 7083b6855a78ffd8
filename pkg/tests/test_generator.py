import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deskswin.attention import ConfigError
from deskswin.config import desk_generator
from deskswin.generator import (Generator, GeneratorConfig, NumericalFault, latent_lerp,
                                spe_encode, stage_param_count)
from deskswin.style import StyleVariant
from deskswin.tensor import Tensor


def small_cfg(**kw):
    base = dict(target_size=8, dims=[16, 8], windows=[4, 4], heads=[2, 2], z_dim=8, w_dim=8,
                mapping_depth=2, blocks_per_scale=1, mlp_ratio=2.0)
    base.update(kw)
    return GeneratorConfig(**base)


def test_output_shape_and_scales(rng):
    g = Generator(small_cfg(), rng)
    assert small_cfg().sizes() == [4, 8]
    assert g(Tensor(rng.standard_normal((3, 8)))).shape == (3, 8, 8, 3)


@pytest.mark.parametrize("variant", [v.value for v in StyleVariant if v is not StyleVariant.ADABN])
def test_every_style_variant_generates(rng, variant):
    g = Generator(small_cfg(style_variant=variant), rng)
    y = g(Tensor(rng.standard_normal((2, 8))))
    assert y.shape == (2, 8, 8, 3) and np.isfinite(y.data).all()


def test_swin_attention_option(rng):
    g = Generator(small_cfg(attention="swin", blocks_per_scale=2), rng)
    modes = [b.attn.mode for b in g.stages[1].blocks]
    assert modes == ["regular", "shifted"]


def test_parameter_count_matches_formula(rng):
    cfg = desk_generator(16)
    g = Generator(cfg, rng)
    mapping = cfg.z_dim * cfg.w_dim + cfg.w_dim + (cfg.mapping_depth - 1) * (cfg.w_dim ** 2 + cfg.w_dim)
    const = cfg.start_size ** 2 * cfg.dims[0]
    stages = sum(stage_param_count(cfg, k) for k in range(cfg.n_scales))
    assert g.num_parameters() == mapping + const + stages


def test_desk_generator_trims_to_target():
    cfg = desk_generator(16)
    assert cfg.sizes() == [4, 8, 16]
    assert len(cfg.dims) == len(cfg.windows) == len(cfg.heads) == 3


@given(st.integers(0, 20), st.integers(0, 20), st.integers(1, 6))
def test_spe_rotation_identity(p, delta, k):
    """(sin, cos) at p + delta is a fixed rotation by omega*delta of the pair at p."""
    c = 4 * 6
    table = spe_encode(1, 48, c)
    omega = 1.0 / 10000.0 ** (2.0 * (k - 1) / 1.0)
    i = 2 * (k - 1)
    s0, c0 = table[0, p, i], table[0, p, i + 1]
    s1, c1 = table[0, p + delta, i], table[0, p + delta, i + 1]
    a = omega * delta
    assert abs(s1 - (s0 * np.cos(a) + c0 * np.sin(a))) < 1e-9
    assert abs(c1 - (c0 * np.cos(a) - s0 * np.sin(a))) < 1e-9


def test_spe_halves_encode_columns_then_rows():
    t = spe_encode(4, 4, 8)
    assert np.array_equal(t[0, :, :4], t[3, :, :4])
    assert np.array_equal(t[:, 0, 4:], t[:, 3, 4:])
    assert t[0, 0, 1] == 1.0 and t[0, 0, 0] == 0.0


def test_spe_needs_channels_divisible_by_four():
    with pytest.raises(ConfigError):
        spe_encode(4, 4, 6)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        small_cfg(windows=[4, 3]).validate()
    with pytest.raises(ConfigError):
        small_cfg(heads=[3, 2]).validate()
    with pytest.raises(ConfigError):
        small_cfg(target_size=12).validate()
    with pytest.raises(ConfigError):
        small_cfg(dims=[16]).validate()


def test_non_finite_activation_names_the_scale(rng):
    g = Generator(small_cfg(), rng)
    g.stages[1].proj.weight.data[:] = np.nan
    with pytest.raises(NumericalFault, match="8x8"):
        g(Tensor(rng.standard_normal((1, 8))))


def test_rgb_is_skip_summed_without_tanh(rng):
    g = Generator(small_cfg(), rng)
    g.stages[1].to_rgb.bias.data[:] = 5.0
    y = g(Tensor(rng.standard_normal((1, 8)))).data
    assert y.max() > 1.0


def test_latent_lerp_endpoints_and_range():
    z0, z1 = np.zeros(3), np.ones(3)
    assert np.array_equal(latent_lerp(z0, z1, 0.0), z0)
    assert np.array_equal(latent_lerp(z0, z1, 1.0), z1)
    with pytest.raises(ValueError):
        latent_lerp(z0, z1, 1.5)


def test_same_seed_same_weights():
    a = Generator(small_cfg(), 3).state_dict()
    b = Generator(small_cfg(), 3).state_dict()
    assert all(np.array_equal(a[k], b[k]) for k in a)
