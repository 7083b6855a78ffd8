"""Differentiable primitives and the composites built from them.

Layout is channel-last ``[B, H, W, C]`` throughout.
"""
from __future__ import annotations

import math

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_result

NORM_EPS = 1e-5


def _pair(a, b):
    if isinstance(a, Tensor) and isinstance(b, Tensor):
        return a, b
    if isinstance(a, Tensor):
        return a, Tensor._raw(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor):
        return Tensor._raw(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


# -- broadcasting ------------------------------------------------------------

def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Sum ``x`` down to ``shape`` (adjoint of broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1)
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(data.shape[lead:])
    in_shape = x.shape
    return make_result(data, (x,), lambda g, out: (broadcast_to(g, in_shape),), "sum_to")


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    in_shape = x.shape
    return make_result(np.broadcast_to(x.data, shape), (x,),
                       lambda g, out: (sum_to(g, in_shape),), "broadcast_to")


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data + b.data, (a, b),
                       lambda g, out: (sum_to(g, a.shape), sum_to(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data - b.data, (a, b),
                       lambda g, out: (sum_to(g, a.shape), sum_to(neg(g), b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return make_result(a.data * b.data, (a, b),
                       lambda g, out: (sum_to(g * b, a.shape) if a.requires_grad else None,
                                       sum_to(g * a, b.shape) if b.requires_grad else None),
                       "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g, out):
        ga = sum_to(g / b, a.shape) if a.requires_grad else None
        gb = sum_to(neg(g * a) / (b * b), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data / b.data, (a, b), bw, "div")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g, out: (neg(g),), "neg")


def power(x: Tensor, p: float) -> Tensor:
    if isinstance(p, Tensor):
        raise TypeError("tensor exponents are not supported")
    p = float(p)
    if p == 1.0:
        return x
    d = x.data
    if p == 2.0:
        data = d * d
    elif p == 3.0:
        data = d * d * d
    elif p == 0.5:
        data = np.sqrt(d)
    elif p == -0.5:
        data = 1.0 / np.sqrt(d)
    elif p == -1.0:
        data = 1.0 / d
    else:
        data = d ** p
    return make_result(data, (x,),
                       lambda g, out: (g * (power(x, p - 1.0) * p),), "pow")


def exp(x: Tensor) -> Tensor:
    return make_result(np.exp(x.data), (x,), lambda g, out: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return make_result(np.log(x.data), (x,), lambda g, out: (g / x,), "log")


def sqrt(x: Tensor) -> Tensor:
    return power(x, 0.5)


def tanh(x: Tensor) -> Tensor:
    return make_result(np.tanh(x.data), (x,), lambda g, out: (g * (1.0 - out * out),), "tanh")


def sigmoid(x: Tensor) -> Tensor:
    data = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(data, (x,), lambda g, out: (g * (out * (1.0 - out)),), "sigmoid")


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), evaluated without overflow."""
    return make_result(np.logaddexp(0, x.data).astype(x.dtype, copy=False), (x,),
                       lambda g, out: (g * sigmoid(x),), "softplus")


def abs(x: Tensor) -> Tensor:  # noqa: A001
    sign = Tensor._raw(np.sign(x.data))
    return make_result(np.abs(x.data), (x,), lambda g, out: (g * sign,), "abs")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = Tensor._raw(np.where(x.data > 0, 1.0, slope).astype(x.dtype))
    return mul(x, mask)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    c = math.sqrt(2.0 / math.pi)
    inner = (x + power(x, 3.0) * 0.044715) * c
    return x * (tanh(inner) + 1.0) * 0.5


# -- reductions --------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    in_shape = x.shape
    kd_shape = tuple(1 if i in axes else s for i, s in enumerate(in_shape))

    def bw(g, out):
        return (broadcast_to(reshape(g, kd_shape), in_shape),)

    return make_result(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return sum(x, axis=axes, keepdims=keepdims) * (1.0 / n)


# -- shape ops ---------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    in_shape = x.shape
    data = x.data.reshape(shape)
    if data.shape == in_shape:
        return x
    return make_result(data, (x,), lambda g, out: (reshape(g, in_shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(x.data, axes), (x,),
                       lambda g, out: (transpose(g, inv),), "transpose")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def _is_basic_index(idx) -> bool:
    idx = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in idx)


def getitem(x: Tensor, idx) -> Tensor:
    in_shape = x.shape
    return make_result(x.data[idx], (x,), lambda g, out: (index_scatter(g, idx, in_shape),),
                       "getitem")


def index_scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` added at ``idx`` (adjoint of indexing)."""
    data = np.zeros(shape, dtype=g.dtype)
    if _is_basic_index(idx):
        data[idx] = g.data
    else:
        np.add.at(data, idx, g.data)
    return make_result(data, (g,), lambda gg, out: (getitem(gg, idx),), "index_scatter")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    ndim = tensors[0].ndim
    axis = axis % ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g, out):
        res = []
        for i in range(len(tensors)):
            sl = [slice(None)] * ndim
            sl[axis] = slice(int(bounds[i]), int(bounds[i + 1]))
            res.append(getitem(g, tuple(sl)))
        return tuple(res)

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw,
                       "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ndim = tensors[0].ndim + 1
    axis = axis % ndim
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def roll(x: Tensor, shifts, axes) -> Tensor:
    shifts = tuple(shifts) if isinstance(shifts, (tuple, list)) else (shifts,)
    axes = tuple(axes) if isinstance(axes, (tuple, list)) else (axes,)
    if not any(shifts):
        return x
    back = tuple(-s for s in shifts)
    return make_result(np.roll(x.data, shifts, axes), (x,),
                       lambda g, out: (roll(g, back, axes),), "roll")


def pad(x: Tensor, pad_width) -> Tensor:
    """Zero padding; ``pad_width`` as in ``np.pad``."""
    pad_width = tuple(tuple(p) for p in pad_width)
    if not any(a or b for a, b in pad_width):
        return x
    idx = tuple(slice(a, a + s) for (a, _), s in zip(pad_width, x.shape))
    return make_result(np.pad(x.data, pad_width), (x,), lambda g, out: (getitem(g, idx),), "pad")


# -- linear algebra ----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # one big GEMM; also keeps the weight gradient a single GEMM
        flat = matmul(reshape(a, (-1, a.shape[-1])), b)
        return reshape(flat, a.shape[:-1] + (b.shape[1],))
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dimensions incompatible: {a.shape} @ {b.shape}") from exc

    def bw(g, out):
        ga = sum_to(matmul(g, swapaxes(b, -1, -2)), a.shape) if a.requires_grad else None
        gb = sum_to(matmul(swapaxes(a, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(data, (a, b), bw, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax axis {axis} out of range for rank {x.ndim}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(g, out):
        return ((g - sum(g * out, axis=axis, keepdims=True)) * out,)

    return make_result(data, (x,), bw, "softmax")


# -- normalization -----------------------------------------------------------

def layer_norm(x: Tensor, gain=None, bias=None, eps: float = NORM_EPS) -> Tensor:
    """Normalize over the last (channel) axis, then apply the affine."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = mean(xc * xc, axis=-1, keepdims=True)
    y = xc * power(var + eps, -0.5)
    if gain is not None:
        y = y * gain
    if bias is not None:
        y = y + bias
    return y


def instance_stats(x: Tensor, eps: float = NORM_EPS):
    """Per-sample, per-channel spatial mean and eps-guarded std of ``[B,H,W,C]``."""
    mu = mean(x, axis=(1, 2))
    xc = x - reshape(mu, (x.shape[0], 1, 1, x.shape[3]))
    var = mean(xc * xc, axis=(1, 2))
    return mu, power(var + eps, 0.5)


def instance_norm(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    mu = mean(x, axis=(1, 2), keepdims=True)
    xc = x - mu
    var = mean(xc * xc, axis=(1, 2), keepdims=True)
    return xc * power(var + eps, -0.5)


def batch_norm(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    axes = tuple(range(x.ndim - 1))
    mu = mean(x, axis=axes, keepdims=True)
    xc = x - mu
    var = mean(xc * xc, axis=axes, keepdims=True)
    return xc * power(var + eps, -0.5)


def rms_norm(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    ms = mean(x * x, axis=-1, keepdims=True)
    return x * power(ms + eps, -0.5)


# -- resampling --------------------------------------------------------------

def resample(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Apply separable linear maps along H (``rows``: [P,H]) and W (``cols``: [Q,W])."""
    rows = np.asarray(rows, dtype=x.dtype)
    cols = np.asarray(cols, dtype=x.dtype)
    y = np.tensordot(rows, x.data, axes=([1], [1])).transpose(1, 0, 2, 3)
    y = np.tensordot(cols, y, axes=([1], [2])).transpose(1, 2, 0, 3)
    return make_result(np.ascontiguousarray(y), (x,),
                       lambda g, out: (resample(g, rows.T, cols.T),), "resample")


def bilinear_matrix(n: int) -> np.ndarray:
    """[2n, n] half-pixel-centred (align_corners=False) 2x interpolation matrix."""
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        src = min(max(src, 0.0), n - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n - 1)
        t = src - lo
        m[o, lo] += 1.0 - t
        m[o, hi] += t
    return m


def avgpool_matrix(n: int) -> np.ndarray:
    m = np.zeros((n // 2, n))
    for o in range(n // 2):
        m[o, 2 * o:2 * o + 2] = 0.5
    return m


def bilinear_upsample2x(x: Tensor) -> Tensor:
    _, h, w, _ = x.shape
    return resample(x, bilinear_matrix(h), bilinear_matrix(w))


def avg_pool2x(x: Tensor) -> Tensor:
    _, h, w, _ = x.shape
    return resample(x, avgpool_matrix(h), avgpool_matrix(w))


# -- convolution -------------------------------------------------------------

def extract_patches(x: Tensor, k: int, stride: int = 1) -> Tensor:
    """[B,H,W,C] -> [B,Ho,Wo,k*k*C] sliding k x k patches (no padding)."""
    b, h, w, c = x.shape
    ho, wo = (h - k) // stride + 1, (w - k) // stride + 1
    s = x.data.strides
    view = np.lib.stride_tricks.as_strided(
        x.data, (b, ho, wo, k, k, c), (s[0], s[1] * stride, s[2] * stride, s[1], s[2], s[3]),
        writeable=False)
    data = view.reshape(b, ho, wo, k * k * c)
    in_shape = x.shape
    return make_result(data, (x,), lambda g, out: (fold_patches(g, in_shape, k, stride),),
                       "extract_patches")


def fold_patches(g: Tensor, shape, k: int, stride: int = 1) -> Tensor:
    """Adjoint of :func:`extract_patches`: scatter-add patches back to ``shape``."""
    b, h, w, c = shape
    _, ho, wo, _ = g.shape
    gp = g.data.reshape(b, ho, wo, k, k, c)
    data = np.zeros(shape, dtype=g.dtype)
    for di in range(k):
        for dj in range(k):
            data[:, di:di + stride * (ho - 1) + 1:stride,
                 dj:dj + stride * (wo - 1) + 1:stride, :] += gp[:, :, :, di, dj, :]
    return make_result(data, (g,), lambda gg, out: (extract_patches(gg, k, stride),),
                       "fold_patches")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation with ``weight`` of shape [k, k, Cin, Cout]."""
    k, k2, cin, cout = weight.shape
    if k != k2:
        raise ShapeError(f"square kernels only, got {weight.shape}")
    if x.shape[-1] != cin:
        raise ShapeError(f"conv2d input channels {x.shape[-1]} != kernel channels {cin}")
    if padding:
        x = pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    if k == 1 and stride == 1:
        y = matmul(x, reshape(weight, (cin, cout)))
    else:
        y = matmul(extract_patches(x, k, stride), reshape(weight, (k * k * cin, cout)))
    if bias is not None:
        y = y + bias
    return y


# -- losses and misc ---------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = matmul(x, weight) if x.ndim >= 2 else reshape(matmul(reshape(x, (1, -1)), weight), (-1,))
    return y + bias if bias is not None else y


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy over the last axis."""
    labels = np.asarray(labels)
    z = logits - Tensor._raw(logits.data.max(axis=-1, keepdims=True))
    lse = log(sum(exp(z), axis=-1))
    picked = getitem(z, (np.arange(len(labels)), labels))
    return mean(lse - picked)
