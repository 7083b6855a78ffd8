"""Diagnostics: 1D window-attention demo, spectral blocking detector,
receptive-field footprints and a projected Frechet distance."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import ContractError, Tensor, grad

log = logging.getLogger(__name__)

INFLUENCE_TOL = 1e-9


# -- 1D demo -----------------------------------------------------------------

def demo_1d_window_attention(signal, window: int, seed: int = 0, dim: int = 8):
    """One attention head with random projections, applied per window.

    Returns ``(output, boundary_jump_ratio)`` where the ratio is the mean
    |difference| across window boundaries over the mean |difference| inside
    windows. Degenerate cases (no boundaries, no variation) report 1.
    """
    x = np.asarray(signal, dtype=np.float64).ravel()
    n = x.size
    if window < 1 or n % window:
        raise ContractError(f"signal length {n} is not a multiple of window {window}")
    rng = np.random.default_rng(seed)
    wq, wk = rng.standard_normal((2, dim))
    wv = rng.standard_normal(dim)
    wo = rng.standard_normal(dim) / np.sqrt(dim)
    tokens = x.reshape(-1, window)
    q = tokens[..., None] * wq
    k = tokens[..., None] * wk
    v = tokens[..., None] * wv
    logits = np.einsum("wid,wjd->wij", q, k) / np.sqrt(dim)
    logits -= logits.max(axis=-1, keepdims=True)
    attn = np.exp(logits)
    attn /= attn.sum(axis=-1, keepdims=True)
    out = (np.einsum("wij,wjd->wid", attn, v) @ wo).ravel()

    diffs = np.abs(np.diff(out))
    at_boundary = (np.arange(1, n) % window) == 0
    if not at_boundary.any() or window == 1:
        return out, 1.0
    across = diffs[at_boundary].mean()
    inside = diffs[~at_boundary].mean()
    if inside < 1e-15:
        return out, 1.0 if across < 1e-15 else float("inf")
    return out, float(across / inside)


# -- spectra -----------------------------------------------------------------

def _fft_last(x: np.ndarray) -> np.ndarray:
    """DFT along the last axis: radix-2 decimation in time, direct DFT otherwise."""
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128)
    if n & (n - 1):
        k = np.arange(n)
        return x.astype(np.complex128) @ np.exp(-2j * np.pi * np.outer(k, k) / n)
    even = _fft_last(x[..., 0::2])
    odd = _fft_last(x[..., 1::2]) * np.exp(-2j * np.pi * np.arange(n // 2) / n)
    return np.concatenate([even + odd, even - odd], axis=-1)


def fft2(img: np.ndarray) -> np.ndarray:
    return np.swapaxes(_fft_last(np.swapaxes(_fft_last(img), -1, -2)), -1, -2)


def _to_gray(img) -> np.ndarray:
    a = np.asarray(img.data if isinstance(img, Tensor) else img, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=-1)
    if a.ndim != 2:
        raise ContractError(f"expected an [H, W] or [H, W, C] image, got shape {a.shape}")
    return a


def center(spec: np.ndarray) -> np.ndarray:
    """Move the zero frequency to index (H//2, W//2)."""
    h, w = spec.shape[-2:]
    return np.roll(spec, (h // 2, w // 2), axis=(-2, -1))


@dataclass
class Spectrum2D:
    """Centered log(1 + |F|) of a grayscale image; DC sits at (S//2, S//2)."""

    log_magnitude: np.ndarray

    @property
    def size(self) -> int:
        return self.log_magnitude.shape[0]

    @property
    def dc(self) -> tuple[int, int]:
        return self.size // 2, self.size // 2

    def magnitude(self) -> np.ndarray:
        return np.expm1(self.log_magnitude)


def fft2_log_magnitude(img) -> Spectrum2D:
    a = _to_gray(img)
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"spectrum needs a square image, got {a.shape}")
    return Spectrum2D(np.log1p(np.abs(center(fft2(a)))))


def lattice_mask(size: int, window: int) -> np.ndarray:
    """Bins near (m*S/k, m'*S/k) with m, m' in 1..k-1, uncentered indexing.

    The neighbourhood is +-1 bin, shrunk to the exact bin when the lattice
    spacing S/k is below 3 so neighbourhoods never merge into the whole plane.
    """
    step = size // window
    radius = 1 if step >= 3 else 0
    near = np.zeros(size, dtype=bool)
    for m in range(1, window):
        for d in range(-radius, radius + 1):
            near[(m * step + d) % size] = True
    near[0] = False
    return near[:, None] & near[None, :]


def blocking_score(img, window: int) -> float:
    """Fraction of non-DC spectral magnitude on the window lattice."""
    a = _to_gray(img)
    s = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ContractError(f"blocking score needs a square image, got {a.shape}")
    if window < 1 or s % window:
        raise ContractError(f"window {window} does not divide image side {s}")
    mag = np.abs(fft2(a - a.mean()))
    mag[0, 0] = 0.0
    total = mag.sum()
    if total <= 1e-12 * max(1.0, np.abs(a).max() * s * s):
        return 0.0
    return float(mag[lattice_mask(s, window)].sum() / total)


def mean_blocking_score(images, window: int) -> float:
    arr = np.asarray(images.data if isinstance(images, Tensor) else images)
    return float(np.mean([blocking_score(im, window) for im in arr]))


# -- receptive-field footprints ----------------------------------------------

@dataclass
class FootprintReport:
    location: tuple[int, int]
    depths: list[int] = field(default_factory=list)
    widths: list[tuple[int, int]] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list, repr=False)

    def width(self, depth: int) -> tuple[int, int]:
        return self.widths[self.depths.index(depth)]

    def covers(self, depth: int, side: int) -> bool:
        return min(self.width(depth)) >= side


def _extent(hit: np.ndarray) -> int:
    """Length of the shortest cyclic interval containing every True entry."""
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return 0
    n = hit.size
    gaps = np.diff(np.concatenate([idx, [idx[0] + n]]))
    return int(n - gaps.max() + 1)


def influence_mask(forward: Callable, x: np.ndarray, location, depth: int) -> np.ndarray:
    inp = Tensor(x, requires_grad=True)
    out = forward(inp, depth)
    r, c = location
    (g,) = grad(out[:, r, c, :].sum(), [inp])
    return np.abs(g.data).sum(axis=(0, -1)) > INFLUENCE_TOL


def footprint_probe(forward: Callable, input_shape, location, depth: int,
                    seed: int = 0) -> FootprintReport:
    """Per-depth extent of input pixels whose gradient reaches one output pixel.

    ``forward(x, d)`` maps [B, H, W, C] through the first ``d`` layers. Extents
    are measured cyclically since shifted windows wrap around the borders.
    """
    x = np.random.default_rng(seed).standard_normal(input_shape)
    report = FootprintReport(tuple(location))
    for d in range(1, depth + 1):
        hit = influence_mask(forward, x, location, d)
        report.depths.append(d)
        report.widths.append((_extent(hit.any(axis=1)), _extent(hit.any(axis=0))))
        report.counts.append(int(hit.sum()))
        report.masks.append(hit)
    return report


def attention_stack(kind: str, dim: int, heads: int, window: int, n_blocks: int, rng=None):
    """Residual window-attention blocks as a ``forward(x, depth)`` callable.

    ``kind``: "double" (every block mixes regular and shifted heads), "swin"
    (regular/shifted alternation) or "regular" (never shifted).
    """
    from .attention import WindowAttention
    from .nn import LayerNorm

    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    modes = {"double": lambda i: "double",
             "swin": lambda i: ("regular", "shifted")[i % 2],
             "regular": lambda i: "regular"}
    if kind not in modes:
        raise ValueError(f"unknown stack kind {kind!r}")
    blocks = [(LayerNorm(dim), WindowAttention(dim, heads, window, modes[kind](i), True, rng))
              for i in range(n_blocks)]
    # unit-scale projections: at the 0.02 training init, multi-hop gradients
    # fall below the influence tolerance and the probe would undercount
    for _, attn in blocks:
        for name, p in attn.named_parameters():
            if p.ndim == 2 and not name.endswith("rpe"):
                p.data = rng.standard_normal(p.shape).astype(p.dtype) / np.sqrt(p.shape[0])

    def forward(x: Tensor, depth: int) -> Tensor:
        for norm, attn in blocks[:depth]:
            x = x + attn(norm(x))
        return x

    return forward


# -- proxy distribution distance ---------------------------------------------

def gaussian_fit(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(features, dtype=np.float64)
    return f.mean(axis=0), np.cov(f, rowvar=False)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def _regularize(cov: np.ndarray, eps: float) -> np.ndarray:
    if np.linalg.matrix_rank(cov) < cov.shape[0]:
        log.info("singular covariance; adding %.0e * I", eps)
        return cov + eps * np.eye(cov.shape[0])
    return cov


def frechet_distance(mu1, cov1, mu2, cov2, eps: float = 1e-6) -> float:
    """||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).

    tr (S1 S2)^{1/2} = sum sqrt(eig(S1^{1/2} S2 S1^{1/2})), a symmetric solve.
    """
    cov1, cov2 = _regularize(cov1, eps), _regularize(cov2, eps)
    s1 = _psd_sqrt(cov1)
    inner = s1 @ cov2 @ s1
    vals = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_sqrt = np.sqrt(np.clip(vals, 0, None)).sum()
    diff = mu1 - mu2
    return float(max(0.0, diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_sqrt))


def projection_matrix(n_in: int, dim: int = 64, seed: int = 0) -> np.ndarray:
    return np.random.default_rng([seed, n_in, dim]).standard_normal((n_in, dim)) / np.sqrt(n_in)


def project_features(images, dim: int = 64, seed: int = 0) -> np.ndarray:
    a = np.asarray(images.data if isinstance(images, Tensor) else images, dtype=np.float64)
    flat = a.reshape(a.shape[0], -1)
    return flat @ projection_matrix(flat.shape[1], dim, seed)


def proxy_distance(real, fake, dim: int = 64, seed: int = 0) -> float:
    """Frechet distance between Gaussian fits of frozen random-projection features."""
    ra = np.asarray(real.data if isinstance(real, Tensor) else real)
    fa = np.asarray(fake.data if isinstance(fake, Tensor) else fake)
    if ra.shape[1:] != fa.shape[1:]:
        raise ContractError(f"image shapes differ: {ra.shape[1:]} vs {fa.shape[1:]}")
    mu1, c1 = gaussian_fit(project_features(ra, dim, seed))
    mu2, c2 = gaussian_fit(project_features(fa, dim, seed))
    return frechet_distance(mu1, c1, mu2, c2)
