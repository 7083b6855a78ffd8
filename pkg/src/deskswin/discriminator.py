"""Discriminators (conv, Haar-wavelet, patch) with spectral normalization."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import init, ops
from .attention import ConfigError
from .nn import Module, Parameter
from .tensor import ShapeError, Tensor

LRELU_SLOPE = 0.2
SN_EPS = 1e-12
LRELU_GAIN = float(np.sqrt(2.0 / (1.0 + LRELU_SLOPE ** 2)))


class HaarCoeffs(NamedTuple):
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def bands(self) -> Tensor:
        return ops.concat(list(self), axis=-1)

    def energy(self) -> float:
        return float(sum(np.sum(np.asarray(b.data, dtype=np.float64) ** 2) for b in self))


def haar_dwt(x: Tensor) -> HaarCoeffs:
    """One level of the orthonormal 2D Haar transform on [B,H,W,C]."""
    _, h, w, _ = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"Haar transform needs even height and width, got {h}x{w}")
    a = x[:, 0::2, 0::2, :]
    b = x[:, 0::2, 1::2, :]
    c = x[:, 1::2, 0::2, :]
    d = x[:, 1::2, 1::2, :]
    return HaarCoeffs((a + b + c + d) * 0.5, (a + b - c - d) * 0.5,
                      (a - b + c - d) * 0.5, (a - b - c + d) * 0.5)


def haar_idwt(coeffs: HaarCoeffs) -> Tensor:
    ll, lh, hl, hh = coeffs
    a = (ll + lh + hl + hh) * 0.5
    b = (ll + lh - hl - hh) * 0.5
    c = (ll - lh + hl - hh) * 0.5
    d = (ll - lh - hl + hh) * 0.5
    bsz, h, w, ch = ll.shape
    top = ops.reshape(ops.stack([a, b], axis=3), (bsz, h, 2 * w, ch))
    bottom = ops.reshape(ops.stack([c, d], axis=3), (bsz, h, 2 * w, ch))
    return ops.reshape(ops.stack([top, bottom], axis=2), (bsz, 2 * h, 2 * w, ch))


def tv_loss(img: Tensor) -> Tensor:
    """Anisotropic total variation: mean |dx| + mean |dy| of forward differences."""
    dy = img[:, 1:, :, :] - img[:, :-1, :, :]
    dx = img[:, :, 1:, :] - img[:, :, :-1, :]
    return ops.mean(ops.abs(dx)) + ops.mean(ops.abs(dy))


def _l2normalize(v: np.ndarray) -> np.ndarray:
    return v / (np.linalg.norm(v) + SN_EPS)


class SpectralNorm(Module):
    """Power-iteration state (u, v) for one weight viewed as [out, fan_in]."""

    def __init__(self, n_out: int, n_in: int, rng=None):
        super().__init__()
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.register_buffer("u", _l2normalize(rng.standard_normal(n_out)))
        self.register_buffer("v", _l2normalize(rng.standard_normal(n_in)))

    @staticmethod
    def as_matrix(weight: Tensor) -> Tensor:
        return ops.transpose(ops.reshape(weight, (-1, weight.shape[-1])), (1, 0))

    def step(self, weight: Tensor) -> None:
        mat = np.asarray(self.as_matrix(weight).data, dtype=np.float64)
        self.v = _l2normalize(mat.T @ self.u)
        self.u = _l2normalize(mat @ self.v)

    def sigma(self, weight: Tensor) -> Tensor:
        mat = self.as_matrix(weight)
        u = Tensor._raw(self.u.astype(weight.dtype).reshape(1, -1))
        v = Tensor._raw(self.v.astype(weight.dtype).reshape(-1, 1))
        return ops.reshape(ops.matmul(ops.matmul(u, mat), v), ())

    def normalize(self, weight: Tensor) -> Tensor:
        return weight / (ops.abs(self.sigma(weight)) + SN_EPS)


def spectral_normalize(weight: Tensor, state: SpectralNorm) -> Tensor:
    """One power-iteration update of ``state``, then ``weight / sigma``."""
    state.step(weight)
    return state.normalize(weight)


class SNConv2d(Module):
    """Conv (or dense, when k == 1 on [B, C]) layer with optional spectral norm."""

    def __init__(self, c_in: int, c_out: int, k: int = 3, stride: int = 1, padding=None,
                 bias: bool = True, spectral_norm: bool = True, rng=None):
        super().__init__()
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.k, self.stride = k, stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter(init.he_normal((k, k, c_in, c_out), LRELU_GAIN, rng))
        self.bias = Parameter(init.zeros(c_out)) if bias else None
        self.sn = SpectralNorm(c_out, k * k * c_in, rng) if spectral_norm else None

    def effective_weight(self) -> Tensor:
        return self.sn.normalize(self.weight) if self.sn is not None else self.weight

    def forward(self, x: Tensor) -> Tensor:
        w = self.effective_weight()
        if x.ndim == 2:
            y = ops.matmul(x, ops.reshape(w, (w.shape[2], w.shape[3])))
            return y + self.bias if self.bias is not None else y
        return ops.conv2d(x, w, self.bias, self.stride, self.padding)


def _act(x: Tensor) -> Tensor:
    return ops.leaky_relu(x, LRELU_SLOPE)


@dataclass
class DiscriminatorConfig:
    kind: str = "wavelet"
    channels: list = field(default_factory=lambda: [32, 64, 128, 128])
    spectral_norm: bool = True
    combine_conv: bool = False
    patch_downsample: int = 2

    def validate(self, size: int) -> "DiscriminatorConfig":
        if self.kind not in ("conv", "wavelet", "patch"):
            raise ConfigError(f"unknown discriminator kind {self.kind!r}")
        if self.kind in ("conv", "wavelet"):
            n = wavelet_scales(size)
            if len(self.channels) < n + 1:
                raise ConfigError(f"need {n + 1} channel entries for size {size}")
        elif len(self.channels) < self.patch_downsample + 1:
            raise ConfigError("patch discriminator needs one channel entry per stage")
        return self


def wavelet_scales(size: int) -> int:
    """Number of halvings n with size / 2^n == 4; size must be a power of two >= 8."""
    if size < 8 or size & (size - 1):
        raise ConfigError(f"input size {size} must be a power of two >= 8")
    n = int(np.log2(size)) - 2
    assert size // 2 ** n == 4
    return n


class ResDown(Module):
    def __init__(self, c_in, c_out, sn, rng):
        super().__init__()
        self.conv1 = SNConv2d(c_in, c_in, 3, spectral_norm=sn, rng=rng)
        self.conv2 = SNConv2d(c_in, c_out, 3, spectral_norm=sn, rng=rng)
        self.skip = SNConv2d(c_in, c_out, 1, bias=False, spectral_norm=sn, rng=rng)

    def forward(self, x):
        h = ops.avg_pool2x(_act(self.conv2(_act(self.conv1(x)))))
        return (h + self.skip(ops.avg_pool2x(x))) * (1.0 / np.sqrt(2.0))


class ConvDiscriminator(Module):
    """Strided residual conv stack down to 4x4, then two dense layers."""

    def __init__(self, size: int, channels, spectral_norm=True, rng=None):
        super().__init__()
        n = wavelet_scales(size)
        ch = list(channels)
        self.from_rgb = SNConv2d(3, ch[0], 1, spectral_norm=spectral_norm, rng=rng)
        self.blocks = [ResDown(ch[i], ch[i + 1], spectral_norm, rng) for i in range(n)]
        self.fc = SNConv2d(16 * ch[n], ch[n], 1, spectral_norm=spectral_norm, rng=rng)
        self.out = SNConv2d(ch[n], 1, 1, spectral_norm=spectral_norm, rng=rng)

    def forward(self, img: Tensor) -> Tensor:
        x = _act(self.from_rgb(img))
        for block in self.blocks:
            x = block(x)
        x = ops.reshape(x, (x.shape[0], -1))
        return ops.reshape(self.out(_act(self.fc(x))), (-1,))


class WaveletDiscriminator(Module):
    """Examines Haar bands at every scale; the LL band carries the image down."""

    def __init__(self, size: int, channels, spectral_norm=True, rng=None):
        super().__init__()
        n = wavelet_scales(size)
        ch = list(channels)
        self.n_scales = n
        self.from_bands = [SNConv2d(12, ch[k], 1, spectral_norm=spectral_norm, rng=rng)
                           for k in range(n)]
        self.conv_a = [SNConv2d(ch[k], ch[k], 3, spectral_norm=spectral_norm, rng=rng)
                       for k in range(n)]
        self.conv_b = [SNConv2d(ch[k], ch[k + 1], 3, spectral_norm=spectral_norm, rng=rng)
                       for k in range(n)]
        self.out = SNConv2d(ch[n], 1, 1, spectral_norm=spectral_norm, rng=rng)

    def forward(self, img: Tensor) -> Tensor:
        h = None
        x = img
        for k in range(self.n_scales):
            coeffs = haar_dwt(x)
            f = _act(self.from_bands[k](coeffs.bands()))
            h = f if h is None else h + f
            h = _act(self.conv_b[k](_act(self.conv_a[k](h))))
            if k < self.n_scales - 1:
                h = ops.avg_pool2x(h)
            x = coeffs.ll * 0.5
        pooled = ops.mean(h, axis=(1, 2))
        return ops.reshape(self.out(pooled), (-1,))


class PatchDiscriminator(Module):
    """Fully convolutional; one logit per patch of a 2^n-downsampled grid."""

    def __init__(self, channels, n_down: int = 2, spectral_norm=True, rng=None):
        super().__init__()
        ch = list(channels)
        self.stem = SNConv2d(3, ch[0], 3, spectral_norm=spectral_norm, rng=rng)
        self.downs = [SNConv2d(ch[i], ch[i + 1], 3, stride=2, spectral_norm=spectral_norm, rng=rng)
                      for i in range(n_down)]
        self.out = SNConv2d(ch[n_down], 1, 1, spectral_norm=spectral_norm, rng=rng)

    def forward(self, img: Tensor) -> Tensor:
        x = _act(self.stem(img))
        for layer in self.downs:
            x = _act(layer(x))
        y = self.out(x)
        return ops.reshape(y, y.shape[:3])


class Discriminator(Module):
    """Dispatches on ``cfg.kind``; wavelet may be paired with a conv branch."""

    def __init__(self, cfg: DiscriminatorConfig, size: int, rng=None):
        super().__init__()
        cfg.validate(size)
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.cfg, self.size = cfg, size
        sn = cfg.spectral_norm
        if cfg.kind == "conv":
            self.net = ConvDiscriminator(size, cfg.channels, sn, rng)
        elif cfg.kind == "wavelet":
            self.net = WaveletDiscriminator(size, cfg.channels, sn, rng)
        else:
            self.net = PatchDiscriminator(cfg.channels, cfg.patch_downsample, sn, rng)
        self.conv_branch = (ConvDiscriminator(size, cfg.channels, sn, rng)
                            if cfg.kind == "wavelet" and cfg.combine_conv else None)

    def forward(self, img: Tensor) -> Tensor:
        logits = self.net(img)
        if self.conv_branch is not None:
            logits = logits + self.conv_branch(img)
        return logits

    def spectral_states(self):
        for m in self.modules():
            if isinstance(m, SNConv2d) and m.sn is not None:
                yield m

    def sn_step(self) -> None:
        """One power-iteration update for every normalized weight."""
        for layer in self.spectral_states():
            layer.sn.step(layer.weight)


def wavelet_disc_forward(img: Tensor, d: WaveletDiscriminator) -> Tensor:
    return d(img)


def patch_disc_forward(img: Tensor, d: PatchDiscriminator) -> Tensor:
    return d(img)
