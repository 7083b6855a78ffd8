import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from deskswin import analysis
from deskswin.analysis import (attention_stack, blocking_score, demo_1d_window_attention, fft2,
                               fft2_log_magnitude, footprint_probe, frechet_distance,
                               proxy_distance)
from deskswin.tensor import ContractError, Tensor


def blocky_and_blurred(size, window, seed):
    """Per-block i.i.d. offsets, and the same image box-filtered k wide (cyclic)."""
    rng = np.random.default_rng(seed)
    n = size // window
    blocky = np.kron(rng.standard_normal((n, n)), np.ones((window, window)))
    f = np.fft.fft2(blocky)
    box = np.zeros(size)
    box[:window] = 1.0 / window
    box = np.roll(box, -(window // 2))
    kernel = np.fft.fft(box)
    blurred = np.real(np.fft.ifft2(f * kernel[:, None] * kernel[None, :]))
    return blocky, blurred


# -- FFT and spectra --

@given(hnp.arrays(np.float64, st.tuples(st.sampled_from([1, 2, 3, 4, 6, 8, 16]),
                                         st.sampled_from([1, 2, 5, 8, 32])),
                  elements=st.floats(-5, 5)))
def test_fft2_matches_numpy(a):
    np.testing.assert_allclose(fft2(a), np.fft.fft2(a), atol=1e-9)


def test_constant_image_has_only_dc():
    spec = fft2_log_magnitude(np.full((8, 8), 3.0))
    mag = spec.magnitude()
    assert mag[spec.dc] == pytest.approx(3.0 * 64)
    mag[spec.dc] = 0
    assert np.abs(mag).max() < 1e-9


def test_cosine_gives_symmetric_peaks():
    x = np.arange(16)
    img = np.cos(2 * np.pi * 3 * x / 16)[None, :].repeat(16, axis=0)
    spec = fft2_log_magnitude(img)
    mag = spec.magnitude()
    c = spec.dc[0]
    peaks = set(map(tuple, np.argwhere(mag > 1.0)))
    assert peaks == {(c, c + 3), (c, c - 3)}


def test_centered_impulse_has_flat_magnitude():
    img = np.zeros((8, 8))
    img[4, 4] = 1.0
    np.testing.assert_allclose(fft2_log_magnitude(img).magnitude(), 1.0, atol=1e-12)


@given(hnp.arrays(np.float64, (8, 8), elements=st.floats(-3, 3)))
def test_spectrum_of_real_image_is_point_symmetric(a):
    lm = fft2_log_magnitude(a).log_magnitude
    # about the DC bin (4, 4) in the centered layout
    sym = np.roll(lm[::-1, ::-1], (1, 1), axis=(0, 1))
    np.testing.assert_allclose(lm, sym, atol=1e-6)


def test_spectrum_needs_square_image():
    with pytest.raises(ContractError):
        fft2_log_magnitude(np.ones((4, 8)))


# -- blocking score --

@pytest.mark.parametrize("size,window", [(64, 8), (32, 8), (32, 4)])
def test_blocky_scores_five_times_blurred(size, window):
    for seed in range(5):
        blocky, blurred = blocky_and_blurred(size, window, seed)
        assert blocking_score(blocky, window) >= 5 * blocking_score(blurred, window)


def test_smooth_gradient_scores_low():
    yy, xx = np.mgrid[0:64, 0:64] / 64.0
    assert blocking_score(xx + 0.5 * yy, 8) < 0.05


def test_constant_image_scores_zero():
    assert blocking_score(np.full((16, 16), 0.7), 8) == 0.0


@given(st.floats(-100, 100))
def test_blocking_score_ignores_constant_offset(c):
    blocky, _ = blocky_and_blurred(32, 8, 0)
    assert abs(blocking_score(blocky + c, 8) - blocking_score(blocky, 8)) < 1e-9


def test_window_must_divide_side():
    with pytest.raises(ContractError):
        blocking_score(np.ones((12, 12)), 8)


def test_lattice_mask_shrinks_for_tight_spacing():
    assert analysis.lattice_mask(16, 8).sum() == 7 * 7
    assert analysis.lattice_mask(64, 8).sum() == (7 * 3) ** 2


# -- 1D demo --

def test_demo_1d_constant_signal_convention():
    out, ratio = demo_1d_window_attention(np.full(64, 0.3), 8, 0)
    assert np.allclose(out, out[0]) and ratio == 1.0


def test_demo_1d_single_window_convention():
    assert demo_1d_window_attention(np.linspace(0, 1, 16), 16, 0)[1] == 1.0


def test_demo_1d_ramp_is_discontinuous_at_boundaries():
    ratios = [demo_1d_window_attention(np.linspace(0, 1, 64), 8, s)[1] for s in range(10)]
    assert np.median(ratios) > 2


def test_demo_1d_length_must_match_window():
    with pytest.raises(ContractError):
        demo_1d_window_attention(np.ones(10), 4)


# -- footprints --

def test_pointwise_network_footprint_is_one_pixel():
    w = np.random.default_rng(0).standard_normal((4, 4))

    def fwd(x, depth):
        for _ in range(depth):
            x = (x @ Tensor(w)).tanh()
        return x

    rep = footprint_probe(fwd, (1, 16, 16, 4), (8, 8), 3)
    assert rep.widths == [(1, 1)] * 3


def test_one_regular_block_stays_in_its_window():
    rep = footprint_probe(attention_stack("regular", 8, 2, 8, 1, rng=0), (1, 32, 32, 8),
                          (16, 16), 1)
    assert max(rep.widths[0]) <= 8


def test_double_block_footprint_contains_regular_block():
    reg = footprint_probe(attention_stack("regular", 8, 2, 8, 1, rng=0), (1, 32, 32, 8),
                          (13, 13), 1)
    dbl = footprint_probe(attention_stack("double", 8, 2, 8, 1, rng=0), (1, 32, 32, 8),
                          (13, 13), 1)
    assert np.all(dbl.masks[0] >= reg.masks[0]) and dbl.counts[0] > reg.counts[0]


@pytest.mark.parametrize("kind", ["double", "swin"])
def test_footprint_widths_monotone(kind):
    rep = footprint_probe(attention_stack(kind, 8, 2, 4, 4, rng=1), (1, 32, 32, 8), (9, 20), 4)
    rows = [w[0] for w in rep.widths]
    assert rows == sorted(rows) and rep.counts == sorted(rep.counts)


# -- proxy distance --

def test_proxy_distance_identical_batches_zero(rng):
    x = rng.standard_normal((128, 8, 8, 3))
    assert abs(proxy_distance(x, x)) < 1e-6


def test_proxy_distance_symmetric(rng):
    a = rng.standard_normal((100, 8, 8, 3))
    b = rng.standard_normal((100, 8, 8, 3)) * 1.3 + 0.2
    assert abs(proxy_distance(a, b) - proxy_distance(b, a)) < 1e-9


def test_proxy_distance_scaled_batch_positive(rng):
    a = rng.uniform(-0.5, 0.5, (100, 8, 8, 3))
    assert proxy_distance(a, 2 * a) > 0


def test_frechet_gaussian_mean_shift_oracle():
    rng = np.random.default_rng(3)
    mu = np.array([1.0, -2.0, 0.5, 0.0])
    a = rng.standard_normal((200_000, 4))
    b = rng.standard_normal((200_000, 4)) + mu
    m1, c1 = analysis.gaussian_fit(a)
    m2, c2 = analysis.gaussian_fit(b)
    assert frechet_distance(m1, c1, m2, c2) == pytest.approx(mu @ mu, rel=0.01)


def test_frechet_matches_closed_form_for_commuting_covariances():
    c1, c2 = np.diag([1.0, 4.0]), np.diag([9.0, 1.0])
    # tr(c1 + c2 - 2 sqrt(c1 c2)) = (1 + 9 - 6) + (4 + 1 - 4)
    assert frechet_distance(np.zeros(2), c1, np.zeros(2), c2) == pytest.approx(5.0, abs=1e-12)


def test_singular_covariance_is_regularized(rng, caplog):
    a = rng.standard_normal((10, 4, 4, 3))
    with caplog.at_level("INFO"):
        d = proxy_distance(a, a + 0.1)
    assert np.isfinite(d) and "singular" in caplog.text
