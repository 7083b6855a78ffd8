"""Training-run orchestration: seeding, evaluation, checkpoints and outputs."""
from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import analysis
from .config import RunConfig, save as save_config
from .data import Dataset
from .discriminator import Discriminator
from .generator import Generator
from .io import Checkpoint, MetricsLog, load_checkpoint, save_checkpoint, write_sample_grid
from .tensor import Tensor, default_dtype, no_grad
from .training import MetricsRow, TrainingFault, TrainState, train_step

log = logging.getLogger(__name__)

STREAMS = ("init_g", "init_d", "data", "z", "aug", "eval")
PERSISTENT_STREAMS = ("data", "z", "aug")


def sample(g: Generator, z, dtype=None) -> np.ndarray:
    """tanh(G(z)) as a numpy batch in [-1, 1]."""
    with no_grad():
        out = g(z if isinstance(z, Tensor) else Tensor(z, dtype=dtype))
    return np.tanh(out.data)


class Trainer:
    """Owns one run; every random draw comes from a named stream of the run seed."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg.validate()
        self.dtype = np.dtype(cfg.train.precision)
        streams = np.random.SeedSequence(cfg.train.seed).spawn(len(STREAMS))
        self.rngs = {k: np.random.default_rng(s) for k, s in zip(STREAMS, streams)}
        with default_dtype(self.dtype):
            g = Generator(cfg.generator, self.rngs["init_g"])
            d = Discriminator(cfg.discriminator, cfg.generator.target_size, self.rngs["init_d"])
            self.state = TrainState(g, d, copy.deepcopy(g), cfg.train, cfg.augment,
                                    {k: self.rngs[k] for k in PERSISTENT_STREAMS})
        self.dataset = Dataset(cfg.dataset)
        n_eval = cfg.run.eval_samples
        ev = self.rngs["eval"]
        self.eval_z = ev.standard_normal((n_eval, cfg.generator.z_dim))
        self.eval_real = self.dataset.batch(ev.integers(0, len(self.dataset), n_eval))

    @property
    def iteration(self) -> int:
        return self.state.iteration

    @property
    def window(self) -> int:
        return self.cfg.generator.windows[self.cfg.generator.n_scales - 1]

    def real_batch(self) -> np.ndarray:
        idx = self.state.rngs["data"].integers(0, len(self.dataset), self.cfg.train.batch_size)
        return self.dataset.batch(idx)

    def ema_samples(self, n: int | None = None) -> np.ndarray:
        z = self.eval_z if n is None else self.eval_z[:n]
        with default_dtype(self.dtype):
            return sample(self.state.g_ema, z, self.dtype)

    def evaluate(self, n_blocking: int = 64) -> tuple[float, float]:
        """(mean blocking score, proxy distance) of the EMA generator on fixed inputs."""
        fake = self.ema_samples()
        score = analysis.mean_blocking_score(fake[:n_blocking], self.window)
        return score, analysis.proxy_distance(self.eval_real, fake)

    def step(self) -> MetricsRow:
        it = self.iteration
        evaluated = None
        interval = self.cfg.run.eval_interval
        if interval and it % interval == 0:
            evaluated = self.evaluate()
        with default_dtype(self.dtype):
            row = train_step(self.state, Tensor(self.real_batch(), dtype=self.dtype))
        if evaluated is not None:
            row.blocking_score, row.proxy_distance = evaluated
        return row

    # -- persistence --

    def checkpoint(self) -> Checkpoint:
        s = self.state
        tensors = {}
        for prefix, mod in (("g", s.g), ("d", s.d), ("ema", s.g_ema)):
            tensors.update({f"{prefix}.{k}": v for k, v in mod.state_dict().items()})
        tensors.update(s.opt_g.state_arrays("opt_g"))
        tensors.update(s.opt_d.state_arrays("opt_d"))
        rng_state = {k: s.rngs[k].bit_generator.state for k in PERSISTENT_STREAMS}
        return Checkpoint(s.iteration, tensors, rng_state, self.cfg.to_dict())

    def restore(self, ckpt: Checkpoint) -> None:
        s = self.state
        for prefix, mod in (("g", s.g), ("d", s.d), ("ema", s.g_ema)):
            n = len(prefix) + 1
            mod.load_state_dict({k[n:]: v for k, v in ckpt.tensors.items()
                                 if k.startswith(prefix + ".")})
        s.opt_g.load_arrays("opt_g", ckpt.tensors)
        s.opt_d.load_arrays("opt_d", ckpt.tensors)
        for k in PERSISTENT_STREAMS:
            s.rngs[k].bit_generator.state = ckpt.rng_state[k]
        s.iteration = int(ckpt.iteration)

    @classmethod
    def from_checkpoint(cls, path) -> "Trainer":
        ckpt = load_checkpoint(path)
        trainer = cls(RunConfig.from_dict(ckpt.config))
        trainer.restore(ckpt)
        return trainer

    # -- driver --

    def run(self, until: int, out_dir=None, on_row=None) -> list[MetricsRow]:
        """Train up to iteration ``until``; write CSV, checkpoints and samples under ``out_dir``."""
        out = Path(out_dir) if out_dir is not None else None
        metrics = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            csv_path = out / "metrics.csv"
            metrics = MetricsLog.load(csv_path) if csv_path.exists() else MetricsLog(csv_path)
            metrics.truncate(self.iteration)
            save_config(self.cfg, out / "config.toml")
        rows = []
        every = self.cfg.run.checkpoint_interval
        with threadpool_limits(self.cfg.run.threads):
            while self.iteration < until:
                row = self.step()
                rows.append(row)
                if on_row is not None:
                    on_row(row)
                if metrics is not None:
                    metrics.append(row)
                    if every and self.iteration % every == 0:
                        metrics.flush()
                        save_checkpoint(out / "checkpoint.bin", self.checkpoint())
            if metrics is not None:
                metrics.flush()
                save_checkpoint(out / "checkpoint.bin", self.checkpoint())
                write_sample_grid(self.ema_samples(64), out / "samples.png")
        return rows


@dataclass
class SmokeReport:
    """Outcome of a short from-scratch run, measured the way the toy criterion reads."""

    kind: str
    iterations: int
    fault: str | None
    d_loss_min: float
    d_loss_max: float
    proxy_start: float
    proxy_end: float
    blocking_end: float
    seconds: float

    @property
    def finite(self) -> bool:
        return self.fault is None and math.isfinite(self.d_loss_min) and math.isfinite(self.d_loss_max)


def smoke_run(cfg: RunConfig, iters: int) -> SmokeReport:
    """Train ``iters`` steps in memory; proxy is taken before step 0 and after the last step."""
    start = time.perf_counter()
    trainer = Trainer(cfg)
    with threadpool_limits(cfg.run.threads):
        _, proxy_start = trainer.evaluate()
    losses, fault = [], None
    try:
        trainer.run(iters, on_row=lambda r: losses.append(r.loss_d))
    except TrainingFault as exc:
        fault = str(exc)
    with threadpool_limits(cfg.run.threads):
        blocking_end, proxy_end = trainer.evaluate() if fault is None else (math.nan, math.nan)
    return SmokeReport(cfg.discriminator.kind, trainer.iteration, fault,
                       min(losses, default=math.nan), max(losses, default=math.nan),
                       proxy_start, proxy_end, blocking_end, time.perf_counter() - start)
