"""Adversarial training: losses, R1, bCR, Adam (TTUR), EMA and the train step."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import ops
from .discriminator import tv_loss
from .generator import NumericalFault
from .tensor import Tensor, grad, no_grad


class TrainingFault(NumericalFault):
    """A loss term went non-finite."""

    def __init__(self, term: str, iteration: int | None = None):
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite {term}{where}")
        self.term, self.iteration = term, iteration


@dataclass
class AugmentationSpec:
    flip_p: float = 0.5
    color_p: float = 1.0
    translation_p: float = 1.0
    cutout_p: float = 1.0
    translation_frac: float = 1.0 / 8.0
    cutout_frac: float = 1.0 / 2.0

    def validate(self) -> "AugmentationSpec":
        for f in ("flip_p", "color_p", "translation_p", "cutout_p"):
            if not 0.0 <= getattr(self, f) <= 1.0:
                raise ValueError(f"{f} must lie in [0, 1]")
        return self


@dataclass
class TrainConfig:
    lr_g: float = 5e-5
    lr_d: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    adam_eps: float = 1e-8
    r1_gamma: float = 10.0
    r1_interval: int = 16
    bcr_enabled: bool = False
    bcr_real: float = 10.0
    bcr_fake: float = 10.0
    tv_enabled: bool = False
    tv_weight_initial: float = 10.0
    tv_anneal_end_iter: int = 500
    ema_decay: float = 0.9978
    batch_size: int = 16
    total_iters: int = 500
    lr_decay_start: int = 500
    seed: int = 0
    precision: str = "float32"

    @property
    def lr_ratio(self) -> float:
        return self.lr_d / self.lr_g if self.lr_g else math.inf

    def validate(self) -> "TrainConfig":
        if self.r1_interval < 1:
            raise ValueError("r1_interval must be >= 1")
        for f in ("lr_g", "lr_d", "r1_gamma", "bcr_real", "bcr_fake", "tv_weight_initial"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")
        if self.batch_size < 1 or self.total_iters < 0:
            raise ValueError("batch_size must be >= 1 and total_iters >= 0")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")
        return self


# -- losses ------------------------------------------------------------------

def _check(t: Tensor, term: str, iteration=None) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise TrainingFault(term, iteration)
    return t


def loss_d(real_logits: Tensor, fake_logits: Tensor, iteration=None) -> Tensor:
    """-log D(x) - log(1 - D(G(z))) with D = sigmoid(logit), via softplus."""
    _check(real_logits, "real logits", iteration)
    _check(fake_logits, "fake logits", iteration)
    return ops.mean(ops.softplus(-real_logits)) + ops.mean(ops.softplus(fake_logits))


def loss_g(fake_logits: Tensor, iteration=None) -> Tensor:
    """Non-saturating generator loss -log D(G(z))."""
    _check(fake_logits, "fake logits", iteration)
    return ops.mean(ops.softplus(-fake_logits))


def r1_penalty(d, real, gamma: float) -> Tensor:
    """gamma * mean over the batch of ||grad_x D(x)||^2 at real samples.

    The result stays differentiable w.r.t. the discriminator parameters.
    """
    x = Tensor(real.data if isinstance(real, Tensor) else real, requires_grad=True)
    logits = d(x)
    (gx,) = [grad(ops.sum(logits), x, create_graph=True)]
    per_sample = ops.sum(gx * gx, axis=tuple(range(1, gx.ndim)))
    return ops.mean(per_sample) * gamma


def lazy_r1(d, real, gamma: float, interval: int, iteration: int) -> Tensor | None:
    """R1 applied every ``interval`` steps, scaled by ``interval``."""
    if iteration % interval:
        return None
    return r1_penalty(d, real, gamma) * float(interval)


# -- augmentation ------------------------------------------------------------

def _shift_zero(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    h, w = img.shape[:2]
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def augment(batch, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Flip, colour, translation and cutout, drawn independently per image.

    The same number of random draws is consumed per image whatever the
    probabilities, so a recorded generator state replays exactly.
    """
    x = np.array(batch.data if isinstance(batch, Tensor) else batch, copy=True)
    b, h, w, c = x.shape
    max_shift = int(round(h * spec.translation_frac))
    cut = int(round(h * spec.cutout_frac))
    for i in range(b):
        gates = rng.random(4)
        flip = gates[0] < spec.flip_p
        color = gates[1] < spec.color_p
        trans = gates[2] < spec.translation_p
        cutout = gates[3] < spec.cutout_p
        brightness = rng.uniform(-0.5, 0.5)
        scales = rng.uniform(0.5, 1.5, size=c)
        dy, dx = rng.integers(-max_shift, max_shift + 1, size=2)
        cy, cx = rng.integers(0, h - cut + 1), rng.integers(0, w - cut + 1)
        img = x[i]
        if flip:
            img = img[:, ::-1]
        if color:
            img = (img + brightness) * scales.astype(img.dtype)
        if trans:
            img = _shift_zero(img, int(dy), int(dx))
        if cutout:
            img = np.array(img)
            img[cy:cy + cut, cx:cx + cut] = 0
        x[i] = img
    return x


def bcr_loss(d, real, fake, spec: AugmentationSpec, lambda_real: float, lambda_fake: float,
             rng: np.random.Generator, real_logits: Tensor | None = None,
             fake_logits: Tensor | None = None) -> Tensor:
    """Consistency of D's logits under augmentation, for real and fake batches."""
    real_logits = d(real) if real_logits is None else real_logits
    fake_logits = d(fake) if fake_logits is None else fake_logits
    aug_real = Tensor(augment(real, spec, rng), dtype=real_logits.dtype)
    aug_fake = Tensor(augment(fake, spec, rng), dtype=fake_logits.dtype)
    dr = real_logits - d(aug_real)
    df = fake_logits - d(aug_fake)
    return ops.mean(dr * dr) * lambda_real + ops.mean(df * df) * lambda_fake


# -- optimisation ------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a fixed list of parameters."""

    def __init__(self, params, beta1: float = 0.0, beta2: float = 0.99, eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for i, (p, g) in enumerate(zip(self.params, grads)):
            g = g.data if isinstance(g, Tensor) else g
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            update = (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = (p.data - lr * update).astype(p.dtype, copy=False)

    def state_arrays(self, prefix: str) -> dict:
        out = {f"{prefix}.t": np.array(self.t, dtype=np.int64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}.m.{i}"] = m
            out[f"{prefix}.v.{i}"] = v
        return out

    def load_arrays(self, prefix: str, arrays: dict) -> None:
        self.t = int(arrays[f"{prefix}.t"])
        self.m = [np.array(arrays[f"{prefix}.m.{i}"]) for i in range(len(self.params))]
        self.v = [np.array(arrays[f"{prefix}.v.{i}"]) for i in range(len(self.params))]


def adam_step(params, grads, state: Adam, lr: float) -> None:
    state.step(grads, lr)


def ema_update(ema_params, live_params, decay: float) -> None:
    """ema <- decay * ema + (1 - decay) * live.

    Written as a two-sided lerp: exact for decay 0 and 1 and when ema == live.
    """
    ema_params, live_params = list(ema_params), list(live_params)
    if len(ema_params) != len(live_params):
        raise ValueError("EMA and live parameter lists differ in length")
    t = 1.0 - decay
    for e, p in zip(ema_params, live_params):
        if e.shape != p.shape:
            raise ValueError(f"EMA shape {e.shape} != live shape {p.shape}")
        diff = p.data - e.data
        e.data = (e.data + t * diff) if t < 0.5 else (p.data - decay * diff)


def lr_schedule(iteration: int, cfg: TrainConfig) -> tuple[float, float]:
    """Constant until ``lr_decay_start``, then linear to zero at ``total_iters``."""
    if iteration < cfg.lr_decay_start:
        return cfg.lr_g, cfg.lr_d
    span = cfg.total_iters - cfg.lr_decay_start
    frac = max(0.0, (cfg.total_iters - iteration) / span) if span > 0 else 0.0
    return cfg.lr_g * frac, cfg.lr_d * frac


def tv_weight(iteration: int, cfg: TrainConfig) -> float:
    if not cfg.tv_enabled or cfg.tv_anneal_end_iter <= 0:
        return 0.0
    return cfg.tv_weight_initial * max(0.0, 1.0 - iteration / cfg.tv_anneal_end_iter)


def grad_norm(grads) -> float:
    return float(np.sqrt(sum(np.sum(np.asarray(g.data, dtype=np.float64) ** 2) for g in grads)))


# -- the step ----------------------------------------------------------------

@dataclass
class MetricsRow:
    iter: int
    loss_d: float
    loss_g: float
    r1: float | None
    bcr: float | None
    tv: float | None
    lr_g: float
    lr_d: float
    grad_norm_g: float
    grad_norm_d: float
    blocking_score: float | None = None
    proxy_distance: float | None = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


class TrainState:
    """Everything one training run mutates."""

    def __init__(self, g, d, g_ema, cfg: TrainConfig, aug: AugmentationSpec,
                 rngs: dict[str, np.random.Generator]):
        self.g, self.d, self.g_ema = g, d, g_ema
        self.cfg, self.aug = cfg, aug
        self.opt_g = Adam(g.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.opt_d = Adam(d.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps)
        self.rngs = rngs
        self.iteration = 0

    def sample_z(self, n: int, stream: str = "z") -> Tensor:
        z = self.rngs[stream].standard_normal((n, self.g.cfg.z_dim))
        return Tensor(z)


def train_step(state: TrainState, real_batch, cfg: TrainConfig | None = None) -> MetricsRow:
    """One D update, one G update, one EMA update."""
    cfg = cfg or state.cfg
    it = state.iteration
    g, d = state.g, state.d
    lr_g, lr_d = lr_schedule(it, cfg)
    real = real_batch if isinstance(real_batch, Tensor) else Tensor(real_batch)
    n = real.shape[0]

    # discriminator
    d.sn_step()
    with no_grad():
        fake = g(state.sample_z(n)).detach()
    real_logits = d(real)
    fake_logits = d(fake)
    ld = loss_d(real_logits, fake_logits, it)
    total_d = ld
    bcr_val = None
    if cfg.bcr_enabled:
        bcr = bcr_loss(d, real, fake, state.aug, cfg.bcr_real, cfg.bcr_fake, state.rngs["aug"],
                       real_logits, fake_logits)
        _check(bcr, "bcr", it)
        total_d = total_d + bcr
        bcr_val = float(bcr.data)
    r1 = lazy_r1(d, real, cfg.r1_gamma, cfg.r1_interval, it)
    r1_val = None
    if r1 is not None:
        _check(r1, "r1", it)
        total_d = total_d + r1
        r1_val = float(r1.data)
    d_params = d.parameters()
    grads_d = grad(total_d, d_params)
    state.opt_d.step(grads_d, lr_d)

    # generator
    fake = g(state.sample_z(n))
    lg = loss_g(d(fake), it)
    total_g = lg
    tv_val = None
    w_tv = tv_weight(it, cfg)
    if w_tv > 0:
        tv = tv_loss(fake)
        _check(tv, "tv", it)
        total_g = total_g + tv * w_tv
        tv_val = float(tv.data)
    grads_g = grad(total_g, g.parameters())
    state.opt_g.step(grads_g, lr_g)

    ema_update(state.g_ema.parameters(), g.parameters(), cfg.ema_decay)
    state.iteration += 1
    return MetricsRow(it, float(ld.data), float(lg.data), r1_val, bcr_val, tv_val, lr_g, lr_d,
                      grad_norm(grads_g), grad_norm(grads_d))
