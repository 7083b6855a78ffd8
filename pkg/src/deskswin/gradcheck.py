"""Central finite-difference checks against the autodiff gradient."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, grad


class OracleError(RuntimeError):
    """The function under test is not deterministic."""


def numerical_grad(f: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f().data)
        flat[i] = orig - h
        fm = float(f().data)
        flat[i] = orig
        out.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return out


def finite_diff_check(f: Callable, x: Tensor | Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst elementwise relative error between analytic and central-difference grads.

    ``f`` takes no arguments (closing over ``x``) or the tensor(s) in ``x``, and
    returns a scalar tensor. The relative error denominator is
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        if not t.data.flags.writeable or not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data).copy()
        t.requires_grad = True

    def call():
        return f() if _takes_no_args(f) else f(*xs)

    a, b = call().data, call().data
    if not np.array_equal(a, b):
        raise OracleError("function returned different values on re-evaluation")
    analytic = grad(call(), xs)
    worst = 0.0
    for t, g in zip(xs, analytic):
        num = numerical_grad(call, t, h)
        an = np.asarray(g.data, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(an), np.abs(num)), 1e-8)
        worst = max(worst, float(np.max(np.abs(an - num) / denom)) if an.size else 0.0)
    return worst


def _takes_no_args(f) -> bool:
    import inspect

    try:
        params = inspect.signature(f).parameters.values()
    except (TypeError, ValueError):
        return False
    return not any(p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD, p.VAR_POSITIONAL)
                   and p.default is p.empty for p in params)
