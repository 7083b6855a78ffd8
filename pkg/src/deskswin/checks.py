"""The finite-difference gradient suite: every op and the composite blocks.

Run in float64. Parameters of composite blocks are redrawn at unit scale so
gradients are well above finite-difference round-off.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .attention import AttentionParams, SwinBlock, double_attention
from .discriminator import DiscriminatorConfig, WaveletDiscriminator, haar_dwt
from .gradcheck import finite_diff_check
from .style import StyleNorm, StyleVariant
from .tensor import Tensor, default_dtype
from .training import r1_penalty

PRIMITIVE_TOL = 1e-4
COMPOSITE_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    kind: str
    error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weights(rng, shape):
    """Fixed contraction weights turning any output into a scalar."""
    return Tensor._raw(rng.standard_normal(shape))


def _away_from_zero(rng, shape, lo=0.2):
    x = rng.uniform(lo, 1.5, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def _unit_scale(module, rng, scale=0.5):
    for _, p in module.named_parameters():
        p.data = rng.standard_normal(p.shape) * scale


def _primitive_cases(rng) -> list[tuple[str, Callable, list]]:
    a = Tensor(rng.standard_normal((3, 4)))
    b = Tensor(rng.standard_normal((3, 4)))
    row = Tensor(rng.standard_normal((1, 4)))
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)))
    kinked = Tensor(_away_from_zero(rng, (3, 4)))
    m1 = Tensor(rng.standard_normal((2, 3, 4)))
    m2 = Tensor(rng.standard_normal((4, 5)))
    img = Tensor(rng.standard_normal((2, 4, 4, 3)))
    w3 = Tensor(rng.standard_normal((3, 3, 3, 2)))
    bias = Tensor(rng.standard_normal(2))
    gain = Tensor(rng.standard_normal(4))
    r = {k: _weights(rng, s) for k, s in
         (("34", (3, 4)), ("234", (2, 3, 4)), ("235", (2, 3, 5)), ("img", (2, 4, 4, 3)),
          ("up", (2, 8, 8, 3)), ("pool", (2, 2, 2, 3)), ("conv", (2, 4, 4, 2)),
          ("conv2", (2, 2, 2, 2)), ("43", (4, 3)), ("cat", (3, 8)), ("stk", (2, 3, 4)),
          ("pad", (2, 6, 6, 3)), ("haar", (2, 2, 2, 12)))}

    def dot(t, key):
        return ops.sum(t * r[key])

    return [
        ("add (broadcast)", lambda x, y: dot(x + y, "34"), [a, row]),
        ("sub", lambda x, y: dot(x - y, "34"), [a, b]),
        ("mul (broadcast)", lambda x, y: dot(x * y, "34"), [a, row]),
        ("div", lambda x, y: dot(x / y, "34"), [a, pos]),
        ("power 3", lambda x: dot(ops.power(x, 3.0), "34"), [a]),
        ("power -0.5", lambda x: dot(ops.power(x, -0.5), "34"), [pos]),
        ("power 1.7", lambda x: dot(ops.power(x, 1.7), "34"), [pos]),
        ("exp", lambda x: dot(ops.exp(x), "34"), [a]),
        ("log", lambda x: dot(ops.log(x), "34"), [pos]),
        ("sqrt", lambda x: dot(ops.sqrt(x), "34"), [pos]),
        ("tanh", lambda x: dot(ops.tanh(x), "34"), [a]),
        ("sigmoid", lambda x: dot(ops.sigmoid(x), "34"), [a]),
        ("softplus", lambda x: dot(ops.softplus(x), "34"), [a]),
        ("abs", lambda x: dot(ops.abs(x), "34"), [kinked]),
        ("leaky_relu", lambda x: dot(ops.leaky_relu(x, 0.2), "34"), [kinked]),
        ("relu", lambda x: dot(ops.relu(x), "34"), [kinked]),
        ("gelu", lambda x: dot(ops.gelu(x), "34"), [a]),
        ("sum axis", lambda x: ops.sum(ops.sum(x, axis=1) * r["34"][:, 0]), [a]),
        ("mean keepdims", lambda x: dot(ops.mean(x, axis=0, keepdims=True) * x, "34"), [a]),
        ("reshape", lambda x: dot(ops.reshape(x, (4, 3)), "43"), [a]),
        ("transpose", lambda x: dot(ops.transpose(x, (1, 0)), "43"), [a]),
        ("getitem", lambda x: ops.sum(x[1:, ::2] * r["34"][1:, ::2]), [a]),
        ("getitem (fancy)", lambda x: ops.sum(x[[0, 2, 0]] * r["34"][:3]), [a]),
        ("concat", lambda x, y: dot(ops.concat([x, y], axis=1), "cat"), [a, b]),
        ("stack", lambda x, y: dot(ops.stack([x, y], axis=0), "stk"), [a, b]),
        ("roll", lambda x: dot(ops.roll(x, (1, -2), (0, 1)), "34"), [a]),
        ("pad", lambda x: dot(ops.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0))), "pad"), [img]),
        ("matmul", lambda x, y: dot(ops.matmul(x, y), "235"), [m1, m2]),
        ("softmax", lambda x: dot(ops.softmax(x, axis=-1), "234"), [m1]),
        ("layer_norm", lambda x, g: dot(ops.layer_norm(x, g), "234"), [m1, gain]),
        ("instance_norm", lambda x: dot(ops.instance_norm(x), "img"), [img]),
        ("batch_norm", lambda x: dot(ops.batch_norm(x), "img"), [img]),
        ("rms_norm", lambda x: dot(ops.rms_norm(x), "img"), [img]),
        ("bilinear_upsample2x", lambda x: dot(ops.bilinear_upsample2x(x), "up"), [img]),
        ("avg_pool2x", lambda x: dot(ops.avg_pool2x(x), "pool"), [img]),
        ("conv2d", lambda x, w, c: dot(ops.conv2d(x, w, c, 1, 1), "conv"), [img, w3, bias]),
        ("conv2d stride 2", lambda x, w: dot(ops.conv2d(x, w, None, 2, 1), "conv2"), [img, w3]),
        ("haar_dwt", lambda x: dot(haar_dwt(x).bands(), "haar"), [img]),
    ]


def _composite_cases(rng) -> list[tuple[str, Callable, list]]:
    cases = []

    pair = [SwinBlock(8, 2, 4, mode, True, 2.0, rng) for mode in ("regular", "shifted")]
    for blk in pair:
        _unit_scale(blk, rng, 0.3)
    x = Tensor(rng.standard_normal((1, 8, 8, 8)))
    r = _weights(rng, (1, 8, 8, 8))
    cases.append(("swin block pair", lambda t: ops.sum(pair[1](pair[0](t)) * r), [x]))

    params = AttentionParams(8, 4, 4, rng)
    _unit_scale(params, rng, 0.3)
    x2 = Tensor(rng.standard_normal((1, 8, 8, 8)))
    cases.append(("double attention (input, W_Q, RPE)",
                  lambda t, wq, rpe: ops.sum(double_attention(t, params) * r),
                  [x2, params.wq, params.rpe]))

    norm = StyleNorm(6, 5, StyleVariant.ADAIN, rng)
    _unit_scale(norm, rng, 0.5)
    x3 = Tensor(rng.standard_normal((2, 4, 4, 6)))
    w = Tensor(rng.standard_normal((2, 5)))
    r3 = _weights(rng, (2, 4, 4, 6))
    cases.append(("AdaIN path (x, w)", lambda t, s: ops.sum(norm(t, s) * r3), [x3, w]))

    cfg = DiscriminatorConfig(kind="wavelet", channels=[4, 4, 4])
    disc = WaveletDiscriminator(8, cfg.channels, True, rng)
    _unit_scale(disc, rng, 0.5)
    img = Tensor(rng.standard_normal((2, 8, 8, 3)))
    r4 = _weights(rng, (2,))
    cases.append(("wavelet discriminator", lambda t: ops.sum(disc(t) * r4), [img]))

    real = Tensor(rng.standard_normal((2, 8, 8, 3)))
    weight = disc.conv_a[0].weight
    cases.append(("R1 penalty (second order, D weight)",
                  lambda wt: r1_penalty(disc, real, 10.0), [weight]))
    return cases


def run_gradient_suite(seed: int = 0, on_result=None) -> list[CheckResult]:
    results = []
    with default_dtype(np.float64):
        rng = np.random.default_rng(seed)
        groups = (("primitive", PRIMITIVE_TOL, _primitive_cases(rng)),
                  ("composite", COMPOSITE_TOL, _composite_cases(rng)))
        for kind, tol, cases in groups:
            for name, f, inputs in cases:
                t0 = time.perf_counter()
                err = finite_diff_check(f, inputs)
                res = CheckResult(name, kind, err, tol, time.perf_counter() - t0)
                results.append(res)
                if on_result is not None:
                    on_result(res)
    return results
