"""Mapping network and style-injection variants."""
from __future__ import annotations

import enum
import warnings

import numpy as np

from . import init, ops
from .attention import ConfigError
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor


class StyleVariant(str, enum.Enum):
    ADAIN = "adain"
    ADALN = "adaln"
    ADABN = "adabn"
    ADARMSNORM = "adarmsnorm"
    MODULATED_MLP = "modulated_mlp"
    CROSS_ATTENTION = "cross_attention"
    NONE = "none"

    @property
    def is_adanorm(self) -> bool:
        return self in (StyleVariant.ADAIN, StyleVariant.ADALN, StyleVariant.ADABN,
                        StyleVariant.ADARMSNORM)


class MappingNetwork(Module):
    """f: Z -> W, a leaky-ReLU MLP."""

    def __init__(self, z_dim: int = 128, w_dim: int = 128, depth: int = 8, slope: float = 0.2,
                 rng=None):
        super().__init__()
        self.slope = slope
        dims = [z_dim] + [w_dim] * depth
        gain = np.sqrt(2.0 / (1.0 + slope ** 2))
        self.layers = [Linear(a, b, weight=init.he_normal((a, b), gain, rng))
                       for a, b in zip(dims[:-1], dims[1:])]

    def forward(self, z: Tensor) -> Tensor:
        x = z
        for layer in self.layers:
            x = ops.leaky_relu(layer(x), self.slope)
        return x


def mapping_forward(z: Tensor, net: MappingNetwork) -> Tensor:
    return net(z)


def _broadcast_style(v: Tensor, x: Tensor) -> Tensor:
    """[B, C] -> [B, 1, ..., 1, C] to match ``x``."""
    return ops.reshape(v, (v.shape[0],) + (1,) * (x.ndim - 2) + (v.shape[1],))


def adain(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Instance-normalize each channel of each sample, then scale and shift."""
    return ops.instance_norm(x) * _broadcast_style(gamma, x) + _broadcast_style(beta, x)


def ada_norm(x: Tensor, variant: StyleVariant, gamma: Tensor, beta: Tensor | None = None) -> Tensor:
    variant = StyleVariant(variant)
    if variant is StyleVariant.ADAIN:
        y = ops.instance_norm(x)
    elif variant is StyleVariant.ADALN:
        y = ops.layer_norm(x)
    elif variant is StyleVariant.ADABN:
        if x.shape[0] == 1:
            warnings.warn("AdaBN with batch size 1 normalizes a single sample", stacklevel=2)
        y = ops.batch_norm(x)
    elif variant is StyleVariant.ADARMSNORM:
        return ops.rms_norm(x) * _broadcast_style(gamma, x)
    else:
        raise ConfigError(f"{variant.value} is not an AdaNorm variant")
    return y * _broadcast_style(gamma, x) + _broadcast_style(beta, x)


class StyleAffine(Linear):
    """w -> per-channel styles, bias-initialized to gamma = 1 (and beta = 0)."""

    def __init__(self, w_dim: int, dim: int, with_shift: bool = True, rng=None):
        n = 2 * dim if with_shift else dim
        super().__init__(w_dim, n, rng=rng)
        b = init.zeros(n)
        b[:dim] = 1.0
        self.bias.data = b
        self.dim = dim
        self.with_shift = with_shift

    def forward(self, w: Tensor):
        s = super().forward(w)
        if not self.with_shift:
            return s, None
        return s[:, :self.dim], s[:, self.dim:]


class StyleNorm(Module):
    """Normalization slot of a transformer block; AdaNorm when style-driven."""

    def __init__(self, dim: int, w_dim: int, variant: StyleVariant, rng=None):
        super().__init__()
        self.variant = StyleVariant(variant)
        if self.variant.is_adanorm:
            self.affine = StyleAffine(w_dim, dim,
                                      with_shift=self.variant is not StyleVariant.ADARMSNORM,
                                      rng=rng)
        else:
            self.norm = LayerNorm(dim)

    def forward(self, x: Tensor, w: Tensor | None) -> Tensor:
        if not self.variant.is_adanorm:
            return self.norm(x)
        gamma, beta = self.affine(w)
        return ada_norm(x, self.variant, gamma, beta)


def modulated_linear(x: Tensor, weight: Tensor, scales: Tensor, bias: Tensor | None = None,
                     eps: float = 1e-8) -> Tensor:
    """Per-sample linear layer with input channels scaled, then demodulated.

    ``x``: [B, ..., Cin]; ``weight``: [Cin, Cout]; ``scales``: [B, Cin].
    Each output column of the modulated weight is rescaled to unit norm.
    """
    b = x.shape[0]
    wmod = ops.reshape(weight, (1,) + weight.shape) * ops.reshape(scales, (b, -1, 1))
    demod = ops.power(ops.sum(wmod * wmod, axis=1, keepdims=True) + eps, -0.5)
    wmod = wmod * demod
    flat = ops.reshape(x, (b, -1, x.shape[-1]))
    y = ops.reshape(ops.matmul(flat, wmod), x.shape[:-1] + (weight.shape[1],))
    return y + bias if bias is not None else y


class ModulatedMLP(Module):
    """Feed-forward network whose two weight matrices are style-modulated."""

    def __init__(self, dim: int, hidden: int, w_dim: int, rng=None):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng=rng)
        self.fc2 = Linear(hidden, dim, rng=rng)
        self.style1 = StyleAffine(w_dim, dim, with_shift=False, rng=rng)
        self.style2 = StyleAffine(w_dim, hidden, with_shift=False, rng=rng)

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        s1, _ = self.style1(w)
        s2, _ = self.style2(w)
        h = ops.gelu(modulated_linear(x, self.fc1.weight, s1, self.fc1.bias))
        return modulated_linear(h, self.fc2.weight, s2, self.fc2.bias)


def modulated_mlp(x: Tensor, w: Tensor, mlp: ModulatedMLP) -> Tensor:
    return mlp(x, w)


class CrossAttentionStyle(Module):
    """Tokens attend to ``n_tokens`` style tokens derived from w; residual added."""

    def __init__(self, dim: int, w_dim: int, heads: int, n_tokens: int = 4, rng=None):
        super().__init__()
        if n_tokens < 1:
            raise ConfigError("cross-attention needs at least one style token")
        if dim % heads:
            raise ConfigError(f"{heads} heads do not divide {dim}")
        self.dim, self.heads, self.n_tokens = dim, heads, n_tokens
        self.to_tokens = Linear(w_dim, n_tokens * dim, rng=rng)
        self.norm = LayerNorm(dim)
        self.q = Linear(dim, dim, rng=rng)
        self.k = Linear(dim, dim, rng=rng)
        self.v = Linear(dim, dim, rng=rng)
        self.out = Linear(dim, dim, rng=rng)

    def forward(self, x: Tensor, w: Tensor) -> Tensor:
        shape = x.shape
        b, c, m, nh = shape[0], self.dim, self.n_tokens, self.heads
        d = c // nh
        tokens = ops.reshape(self.to_tokens(w), (b, m, c))
        flat = ops.reshape(self.norm(x), (b, -1, c))
        n = flat.shape[1]
        q = ops.transpose(ops.reshape(self.q(flat), (b, n, nh, d)), (0, 2, 1, 3))
        k = ops.transpose(ops.reshape(self.k(tokens), (b, m, nh, d)), (0, 2, 1, 3))
        v = ops.transpose(ops.reshape(self.v(tokens), (b, m, nh, d)), (0, 2, 1, 3))
        attn = ops.softmax(ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d)), axis=-1)
        y = ops.reshape(ops.transpose(ops.matmul(attn, v), (0, 2, 1, 3)), (b, n, c))
        return x + ops.reshape(self.out(y), shape)


def cross_attention_style(x: Tensor, w: Tensor, module: CrossAttentionStyle) -> Tensor:
    return module(x, w)
