"""Window partitioning, shifted windows, relative position bias and double attention."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import init, ops
from .nn import MLP, LayerNorm, Module, Parameter
from .tensor import Tensor


class ConfigError(ValueError):
    """Architecture parameters are inconsistent."""


@dataclass(frozen=True)
class WindowGrid:
    height: int
    width: int
    window: int
    shift: int = 0

    def __post_init__(self):
        if self.window < 1 or self.height % self.window or self.width % self.window:
            raise ConfigError(
                f"window {self.window} must divide feature map {self.height}x{self.width}")
        if not 0 <= self.shift < max(1, min(self.height, self.width)):
            raise ConfigError(f"shift {self.shift} out of range")

    @property
    def n_windows(self) -> int:
        return (self.height // self.window) * (self.width // self.window)


def window_partition(x: Tensor, window: int) -> Tensor:
    """[B,H,W,C] -> [B*nW, k, k, C], windows in row-major order."""
    b, h, w, c = x.shape
    WindowGrid(h, w, window)
    x = ops.reshape(x, (b, h // window, window, w // window, window, c))
    x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
    return ops.reshape(x, (-1, window, window, c))


def window_reverse(windows: Tensor, window: int, height: int, width: int) -> Tensor:
    c = windows.shape[-1]
    b = windows.shape[0] // ((height // window) * (width // window))
    x = ops.reshape(windows, (b, height // window, width // window, window, window, c))
    x = ops.transpose(x, (0, 1, 3, 2, 4, 5))
    return ops.reshape(x, (b, height, width, c))


def cyclic_shift(x: Tensor, shift: int) -> Tensor:
    """Toroidal roll by (-shift, -shift); pixel (s, s) lands on (0, 0)."""
    return ops.roll(x, (-shift, -shift), (1, 2))


def cyclic_unshift(x: Tensor, shift: int) -> Tensor:
    return ops.roll(x, (shift, shift), (1, 2))


def relative_position_index(window: int) -> np.ndarray:
    """[k*k, k*k] indices into a (2k-1)^2 bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    coords = coords.reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (window - 1)
    return rel[0] * (2 * window - 1) + rel[1]


class AttentionParams(Module):
    """Per-head Q/K/V projections (packed column-wise), output projection, RPE table."""

    def __init__(self, dim: int, heads: int, window: int, rng=None, std: float = 0.02):
        super().__init__()
        if heads < 1 or dim % heads:
            raise ConfigError(f"{heads} heads do not divide channel dim {dim}")
        self.dim, self.heads, self.window = dim, heads, window
        self.head_dim = dim // heads
        self.wq = Parameter(init.truncated_normal((dim, dim), std, rng))
        self.wk = Parameter(init.truncated_normal((dim, dim), std, rng))
        self.wv = Parameter(init.truncated_normal((dim, dim), std, rng))
        self.bq = Parameter(init.zeros(dim))
        self.bk = Parameter(init.zeros(dim))
        self.bv = Parameter(init.zeros(dim))
        self.wo = Parameter(init.truncated_normal((dim, dim), std, rng))
        self.bo = Parameter(init.zeros(dim))
        self.rpe = Parameter(init.zeros(((2 * window - 1) ** 2, heads)))
        self.register_buffer("rpe_index", relative_position_index(window))

    def head_columns(self, heads) -> slice:
        heads = range(self.heads)[heads] if isinstance(heads, slice) else heads
        lo, hi = min(heads), max(heads) + 1
        if list(heads) != list(range(lo, hi)):
            raise ConfigError("head subsets must be contiguous")
        return slice(lo * self.head_dim, hi * self.head_dim)


def window_attention(x_windows: Tensor, params: AttentionParams, use_rpe: bool = True,
                     heads=None) -> Tensor:
    """Scaled dot-product attention inside each window for a subset of heads.

    ``x_windows`` is [nW, k, k, C] or [nW, k*k, C]. Returns [nW, k*k, n_sel*d]
    (the caller applies the output projection).
    """
    heads = range(params.heads) if heads is None else heads
    heads = range(params.heads)[heads] if isinstance(heads, slice) else heads
    if len(heads) == 0:
        raise ConfigError("empty head subset")
    if x_windows.ndim == 4:
        x_windows = ops.reshape(x_windows, (x_windows.shape[0], -1, x_windows.shape[-1]))
    nw, n, c = x_windows.shape
    if c != params.dim:
        raise ConfigError(f"token dim {c} != attention dim {params.dim}")
    if n != params.window ** 2:
        raise ConfigError(f"window holds {n} tokens, expected {params.window ** 2}")
    d, nh = params.head_dim, len(heads)
    cols = params.head_columns(heads)

    def project(wt, bt):
        y = ops.matmul(x_windows, ops.getitem(wt, (slice(None), cols)))
        y = y + ops.getitem(bt, cols)
        return ops.transpose(ops.reshape(y, (nw, n, nh, d)), (0, 2, 1, 3))

    q = project(params.wq, params.bq)
    k = project(params.wk, params.bk)
    v = project(params.wv, params.bv)
    logits = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(d))
    if use_rpe:
        table = ops.getitem(params.rpe, (slice(None), slice(min(heads), max(heads) + 1)))
        bias = ops.getitem(table, params.rpe_index)            # [n, n, nh]
        logits = logits + ops.transpose(bias, (2, 0, 1))
    attn = ops.softmax(logits, axis=-1)
    out = ops.matmul(attn, v)                                   # [nW, nh, n, d]
    return ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (nw, n, nh * d))


def _branch(x: Tensor, params: AttentionParams, heads, shift: int, use_rpe: bool) -> Tensor:
    b, h, w, _ = x.shape
    k = params.window
    if shift:
        x = cyclic_shift(x, shift)
    out = window_attention(window_partition(x, k), params, use_rpe, heads)
    out = window_reverse(ops.reshape(out, (out.shape[0], k, k, out.shape[-1])), k, h, w)
    return cyclic_unshift(out, shift) if shift else out


def split_heads(heads: int) -> tuple[range, range]:
    """Heads [0, h//2) attend regular windows, [h//2, h) shifted ones."""
    half = heads // 2
    return range(0, half), range(half, heads)


def double_attention(x: Tensor, params: AttentionParams, use_rpe: bool = True) -> Tensor:
    """Half the heads on regular windows, half on windows shifted by k//2."""
    regular, shifted = split_heads(params.heads)
    shift = params.window // 2
    parts = []
    if len(regular):
        parts.append(_branch(x, params, regular, 0, use_rpe))
    if len(shifted):
        parts.append(_branch(x, params, shifted, shift, use_rpe))
    return ops.matmul(ops.concat(parts, axis=-1), params.wo) + params.bo


def single_window_attention(x: Tensor, params: AttentionParams, shifted: bool,
                            use_rpe: bool = True) -> Tensor:
    """All heads on one partition: W-MSA (``shifted=False``) or SW-MSA."""
    shift = params.window // 2 if shifted else 0
    out = _branch(x, params, range(params.heads), shift, use_rpe)
    return ops.matmul(out, params.wo) + params.bo


class WindowAttention(Module):
    """Attention sub-layer; ``mode`` is 'double', 'regular' or 'shifted'."""

    def __init__(self, dim: int, heads: int, window: int, mode: str = "double",
                 use_rpe: bool = True, rng=None):
        super().__init__()
        if mode not in ("double", "regular", "shifted"):
            raise ConfigError(f"unknown attention mode {mode!r}")
        self.mode, self.use_rpe = mode, use_rpe
        self.params = AttentionParams(dim, heads, window, rng)

    def forward(self, x: Tensor) -> Tensor:
        if self.mode == "double":
            return double_attention(x, self.params, self.use_rpe)
        return single_window_attention(x, self.params, self.mode == "shifted", self.use_rpe)


class SwinBlock(Module):
    """Pre-norm residual block: x + Attn(LN x), then x + MLP(LN x)."""

    def __init__(self, dim: int, heads: int, window: int, mode: str, use_rpe: bool = True,
                 mlp_ratio: float = 4.0, rng=None):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, mode, use_rpe, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = MLP(dim, int(dim * mlp_ratio), rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class SwinBlockPair(Module):
    """Regular-window block followed by a shifted-window block."""

    def __init__(self, dim: int, heads: int, window: int, use_rpe: bool = True,
                 mlp_ratio: float = 4.0, rng=None):
        super().__init__()
        self.first = SwinBlock(dim, heads, window, "regular", use_rpe, mlp_ratio, rng)
        self.second = SwinBlock(dim, heads, window, "shifted", use_rpe, mlp_ratio, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


def swin_block_pair(x: Tensor, block_a: SwinBlock, block_b: SwinBlock) -> Tensor:
    return block_b(block_a(x))
