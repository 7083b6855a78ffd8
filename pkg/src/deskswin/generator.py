"""Style-based hierarchical window-attention generator."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import init, ops
from .attention import ConfigError, WindowAttention
from .nn import MLP, Linear, Module, Parameter
from .style import (CrossAttentionStyle, MappingNetwork, ModulatedMLP, StyleNorm,
                    StyleVariant)
from .tensor import Tensor


class NumericalFault(FloatingPointError):
    """A non-finite value appeared in a forward pass or loss."""


@dataclass
class GeneratorConfig:
    start_size: int = 4
    target_size: int = 32
    dims: list = field(default_factory=lambda: [128, 128, 64, 32])
    windows: list = field(default_factory=lambda: [4, 8, 8, 8])
    heads: list = field(default_factory=lambda: [8, 8, 4, 4])
    style_variant: str = "adain"
    attention: str = "double"
    use_spe: bool = True
    use_rpe: bool = True
    spe_divisor: float = 1.0
    z_dim: int = 128
    w_dim: int = 128
    mapping_depth: int = 8
    blocks_per_scale: int = 2
    mlp_ratio: float = 4.0
    style_tokens: int = 4

    @property
    def n_scales(self) -> int:
        ratio = self.target_size // self.start_size
        return int(round(np.log2(ratio))) + 1

    def sizes(self) -> list[int]:
        return [self.start_size * 2 ** k for k in range(self.n_scales)]

    def validate(self) -> "GeneratorConfig":
        ratio = self.target_size / self.start_size
        if ratio < 1 or 2 ** int(round(np.log2(ratio))) != ratio:
            raise ConfigError(
                f"target_size {self.target_size} must be start_size {self.start_size} * 2^n")
        n = self.n_scales
        for name in ("dims", "windows", "heads"):
            if len(getattr(self, name)) < n:
                raise ConfigError(f"{name} lists {len(getattr(self, name))} scales, need {n}")
        for k, size in enumerate(self.sizes()):
            c, win, h = self.dims[k], self.windows[k], self.heads[k]
            if win > size or size % win:
                raise ConfigError(f"scale {size}: window {win} must divide the side")
            if c % h:
                raise ConfigError(f"scale {size}: {h} heads do not divide {c} channels")
            if self.use_spe and c % 4:
                raise ConfigError(f"scale {size}: SPE needs channels divisible by 4, got {c}")
        StyleVariant(self.style_variant)
        if self.attention not in ("double", "swin"):
            raise ConfigError(f"attention must be 'double' or 'swin', got {self.attention!r}")
        return self


def spe_encode(height: int, width: int, channels: int, divisor: float = 1.0) -> np.ndarray:
    """Sinusoidal position table [H, W, C].

    Channels [0, C/2) hold interleaved sin/cos of w_k * x (x = column), channels
    [C/2, C) the same for y (row), with w_k = 1 / 10000^(2k / divisor).
    """
    if channels % 4:
        raise ConfigError(f"SPE needs channels divisible by 4, got {channels}")
    n_freq = channels // 4
    omega = 1.0 / 10000.0 ** (2.0 * np.arange(n_freq) / divisor)

    def axis_code(coord):
        ang = coord[:, None] * omega[None, :]
        out = np.empty((len(coord), 2 * n_freq))
        out[:, 0::2] = np.sin(ang)
        out[:, 1::2] = np.cos(ang)
        return out

    horiz = axis_code(np.arange(width, dtype=np.float64))
    vert = axis_code(np.arange(height, dtype=np.float64))
    table = np.empty((height, width, channels))
    table[:, :, :channels // 2] = horiz[None, :, :]
    table[:, :, channels // 2:] = vert[:, None, :]
    return table


class GeneratorBlock(Module):
    """One transformer block with style injection in both sub-layers."""

    def __init__(self, dim, heads, window, w_dim, variant, mode="double", use_rpe=True,
                 mlp_ratio=4.0, style_tokens=4, rng=None):
        super().__init__()
        variant = StyleVariant(variant)
        hidden = int(dim * mlp_ratio)
        self.norm1 = StyleNorm(dim, w_dim, variant, rng)
        self.attn = WindowAttention(dim, heads, window, mode, use_rpe, rng)
        self.cross = (CrossAttentionStyle(dim, w_dim, heads, style_tokens, rng)
                      if variant is StyleVariant.CROSS_ATTENTION else None)
        self.norm2 = StyleNorm(dim, w_dim, variant, rng)
        self.mlp = (ModulatedMLP(dim, hidden, w_dim, rng) if variant is StyleVariant.MODULATED_MLP
                    else MLP(dim, hidden, rng))

    def forward(self, x: Tensor, w: Tensor | None) -> Tensor:
        x = x + self.attn(self.norm1(x, w))
        if self.cross is not None:
            x = self.cross(x, w)
        return x + self.mlp(self.norm2(x, w), w)


class ToRGB(Linear):
    """Pointwise projection to RGB (Glorot, gain 0.02)."""

    def __init__(self, dim: int, rng=None):
        super().__init__(dim, 3, weight=init.glorot_uniform((dim, 3), 0.02, rng))


def trgb(x: Tensor, layer: ToRGB) -> Tensor:
    return layer(x)


class Stage(Module):
    def __init__(self, cfg: GeneratorConfig, k: int, rng=None):
        super().__init__()
        size, c = cfg.sizes()[k], cfg.dims[k]
        self.size, self.k = size, k
        self.proj = Linear(cfg.dims[k - 1], c, rng=rng) if k > 0 else None
        self.spe = spe_encode(size, size, c, cfg.spe_divisor) if cfg.use_spe else None
        self.blocks = []
        for i in range(cfg.blocks_per_scale):
            mode = "double" if cfg.attention == "double" else ("regular", "shifted")[i % 2]
            self.blocks.append(GeneratorBlock(
                c, cfg.heads[k], cfg.windows[k], cfg.w_dim, cfg.style_variant, mode,
                cfg.use_rpe, cfg.mlp_ratio, cfg.style_tokens, rng))
        self.to_rgb = ToRGB(c, rng)

    def forward(self, x: Tensor, w: Tensor | None) -> Tensor:
        if self.proj is not None:
            x = self.proj(ops.bilinear_upsample2x(x))
        if self.spe is not None:
            x = x + Tensor._raw(self.spe.astype(x.dtype))
        for block in self.blocks:
            x = block(x, w)
        return x


class Generator(Module):
    """z -> mapping -> constant 4x4 input -> per-scale blocks -> skip-summed tRGB."""

    def __init__(self, cfg: GeneratorConfig, rng=None):
        super().__init__()
        cfg.validate()
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.cfg = cfg
        self.variant = StyleVariant(cfg.style_variant)
        s0, c0 = cfg.start_size, cfg.dims[0]
        if self.variant is StyleVariant.NONE:
            self.mapping = None
            self.const = None
            self.input_proj = Linear(cfg.z_dim, s0 * s0 * c0, rng=rng)
        else:
            self.mapping = MappingNetwork(cfg.z_dim, cfg.w_dim, cfg.mapping_depth, rng=rng)
            self.const = Parameter(rng.standard_normal((1, s0, s0, c0)))
            self.input_proj = None
        self.stages = [Stage(cfg, k, rng) for k in range(cfg.n_scales)]

    def input_map(self, z: Tensor) -> Tensor:
        b, s0, c0 = z.shape[0], self.cfg.start_size, self.cfg.dims[0]
        if self.input_proj is not None:
            return ops.reshape(self.input_proj(z), (b, s0, s0, c0))
        return ops.broadcast_to(self.const, (b, s0, s0, c0))

    def synthesize(self, x: Tensor, w: Tensor | None) -> Tensor:
        rgb = None
        for stage in self.stages:
            x = stage(x, w)
            if not np.isfinite(x.data).all():
                raise NumericalFault(f"non-finite activations at the {stage.size}x{stage.size} scale")
            y = stage.to_rgb(x)
            rgb = y if rgb is None else ops.bilinear_upsample2x(rgb) + y
        return rgb

    def forward(self, z: Tensor) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        w = self.mapping(z) if self.mapping is not None else None
        return self.synthesize(self.input_map(z), w)


def generator_forward(z: Tensor, gen: Generator) -> Tensor:
    return gen(z)


def latent_lerp(z0, z1, t: float):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation weight {t} outside [0, 1]")
    return (1.0 - t) * z0 + t * z1


def block_param_count(dim: int, heads: int, window: int, w_dim: int, variant, mlp_ratio: float,
                      style_tokens: int) -> int:
    variant = StyleVariant(variant)
    hidden = int(dim * mlp_ratio)
    if variant is StyleVariant.ADARMSNORM:
        norm = w_dim * dim + dim
    elif variant.is_adanorm:
        norm = w_dim * 2 * dim + 2 * dim
    else:
        norm = 2 * dim
    attn = 4 * (dim * dim + dim) + (2 * window - 1) ** 2 * heads
    mlp = dim * hidden + hidden + hidden * dim + dim
    extra = 0
    if variant is StyleVariant.MODULATED_MLP:
        extra = (w_dim * dim + dim) + (w_dim * hidden + hidden)
    elif variant is StyleVariant.CROSS_ATTENTION:
        extra = (w_dim * style_tokens * dim + style_tokens * dim) + 2 * dim + 4 * (dim * dim + dim)
    return 2 * norm + attn + mlp + extra


def stage_param_count(cfg: GeneratorConfig, k: int) -> int:
    c = cfg.dims[k]
    proj = cfg.dims[k - 1] * c + c if k > 0 else 0
    block = block_param_count(c, cfg.heads[k], cfg.windows[k], cfg.w_dim, cfg.style_variant,
                              cfg.mlp_ratio, cfg.style_tokens)
    return proj + cfg.blocks_per_scale * block + (3 * c + 3)
