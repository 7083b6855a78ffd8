"""Seeded weight initializers."""
from __future__ import annotations

import numpy as np

from .tensor import get_default_dtype


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def truncated_normal(shape, std: float = 0.02, rng=None, bound: float = 2.0) -> np.ndarray:
    """Zero-mean normal with draws outside +-bound*std rejected and redrawn."""
    rng = _rng(rng)
    n = int(np.prod(shape))
    out = rng.standard_normal(n)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return (out * std).reshape(shape).astype(get_default_dtype())


def fans(shape) -> tuple[int, int]:
    """(fan_in, fan_out) for [in, out] matrices and [k, k, in, out] kernels."""
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = int(np.prod(shape[:-2]))
    return shape[-2] * receptive, shape[-1] * receptive


def glorot_uniform(shape, gain: float = 1.0, rng=None) -> np.ndarray:
    fan_in, fan_out = fans(shape)
    bound = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return _rng(rng).uniform(-bound, bound, size=shape).astype(get_default_dtype())


def he_normal(shape, gain: float = np.sqrt(2.0), rng=None) -> np.ndarray:
    fan_in, _ = fans(shape)
    return (_rng(rng).standard_normal(shape) * gain / np.sqrt(fan_in)).astype(get_default_dtype())


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=get_default_dtype())


def ones(shape) -> np.ndarray:
    return np.ones(shape, dtype=get_default_dtype())
