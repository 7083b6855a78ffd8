"""Command-line entry point: ``deskswin <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attention import ConfigError

OUTPUT_ROOT_ENV = "DESKSWIN_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_MISSING_CONFIG = 3
EXIT_INVALID_CONFIG = 4
EXIT_RUNTIME = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------

def load_run_config(args):
    from .config import RunConfig, load

    if args.config is None:
        cfg = RunConfig()
    else:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}", EXIT_MISSING_CONFIG)
        cfg = load(path)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.validate()
    return cfg


def run_dir(args, cfg) -> Path:
    """``--run-dir`` or the config's out_dir, placed under $DESKSWIN_OUTPUT_ROOT if relative."""
    d = Path(args.run_dir or cfg.run.out_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not d.is_absolute():
        d = Path(root) / d
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path: Path, header, rows) -> None:
    from .io import atomic_write_bytes

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode())


def _trainer(args, cfg):
    """A trainer restored from the run directory's checkpoint when one exists."""
    from .run import Trainer

    ckpt = Path(args.checkpoint) if getattr(args, "checkpoint", None) else \
        run_dir(args, cfg) / "checkpoint.bin"
    if ckpt.exists():
        return Trainer.from_checkpoint(ckpt)
    logging.getLogger(__name__).warning("no checkpoint at %s; using an untrained generator", ckpt)
    return Trainer(cfg)


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    from .run import Trainer

    cfg = load_run_config(args)
    if args.iters is not None:
        cfg.train.total_iters = args.iters
        cfg.train.lr_decay_start = min(cfg.train.lr_decay_start, args.iters)
    out = run_dir(args, cfg)
    ckpt = out / "checkpoint.bin"
    if args.resume and ckpt.exists():
        trainer = Trainer.from_checkpoint(ckpt)
    else:
        trainer = Trainer(cfg)
        stale = out / "metrics.csv"
        if stale.exists():
            stale.unlink()
    until = args.iters if args.iters is not None else trainer.cfg.train.total_iters
    rows = trainer.run(until, out)
    last = rows[-1] if rows else None
    if last is not None:
        print(f"iter {last.iter}: loss_d={last.loss_d:.4f} loss_g={last.loss_g:.4f} -> {out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    from .io import write_sample_grid

    cfg = load_run_config(args)
    trainer = _trainer(args, cfg)
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    z = rng.standard_normal((args.n, trainer.cfg.generator.z_dim))
    from .run import sample

    path = run_dir(args, cfg) / args.out
    write_sample_grid(sample(trainer.state.g_ema, z, trainer.dtype), path)
    print(path)
    return EXIT_OK


def interpolation_batch(g, z0, z1, steps: int, dtype=None) -> np.ndarray:
    from .generator import latent_lerp
    from .run import sample

    ts = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
    z = np.stack([latent_lerp(z0, z1, float(t)) for t in ts])
    return sample(g, z, dtype)


def cmd_interpolate(args) -> int:
    from .io import write_sample_grid

    if args.steps < 2:
        raise CliError("--steps must be >= 2", EXIT_INVALID_CONFIG)
    cfg = load_run_config(args)
    trainer = _trainer(args, cfg)
    rng = np.random.default_rng(cfg.seed)
    z0, z1 = rng.standard_normal((2, trainer.cfg.generator.z_dim))
    imgs = interpolation_batch(trainer.state.g_ema, z0, z1, args.steps, trainer.dtype)
    path = run_dir(args, cfg) / args.out
    write_sample_grid(imgs, path, ncols=args.steps)
    print(path)
    return EXIT_OK


def cmd_analyze_spectrum(args) -> int:
    from . import analysis
    from .io import read_png, write_heatmap

    cfg = load_run_config(args)
    out = run_dir(args, cfg)
    if args.image:
        img = read_png(args.image).astype(np.float64) / 127.5 - 1.0
        images, names = img[None], [Path(args.image).name]
    else:
        trainer = _trainer(args, cfg)
        images = trainer.ema_samples(args.n)
        names = [f"sample_{i}" for i in range(len(images))]
    window = args.window or cfg.generator.windows[cfg.generator.n_scales - 1]
    rows = []
    for name, img in zip(names, images):
        rows.append([name, repr(analysis.blocking_score(img, window))])
    mean_spec = np.mean([analysis.fft2_log_magnitude(im).log_magnitude for im in images], axis=0)
    write_heatmap(mean_spec, out / "spectrum.png")
    _write_csv(out / "spectrum.csv", ["image", "blocking_score"], rows)
    scores = [float(r[1]) for r in rows]
    print(f"mean blocking_score (window {window}) = {np.mean(scores):.6f}")
    return EXIT_OK


def cmd_demo_1d(args) -> int:
    from . import analysis

    cfg = load_run_config(args)
    x = np.linspace(0.0, 1.0, args.length)
    base = cfg.seed
    rows = []
    for s in range(args.seeds):
        _, ratio = analysis.demo_1d_window_attention(x, args.window, base + s)
        rows.append([base + s, repr(ratio)])
    _write_csv(run_dir(args, cfg) / "demo_1d.csv", ["seed", "boundary_jump_ratio"], rows)
    med = float(np.median([float(r[1]) for r in rows]))
    print(f"median boundary_jump_ratio over {args.seeds} seeds = {med:.3f}")
    return EXIT_OK


def cmd_footprint(args) -> int:
    from . import analysis
    from .tensor import default_dtype

    cfg = load_run_config(args)
    with default_dtype(np.float64):
        fwd = analysis.attention_stack(args.kind, args.dim, args.heads, args.window, args.depth,
                                       rng=cfg.seed)
        c = args.size // 2
        rep = analysis.footprint_probe(fwd, (1, args.size, args.size, args.dim), (c, c),
                                       args.depth, seed=cfg.seed)
    rows = [[d, wy, wx, n] for d, (wy, wx), n in zip(rep.depths, rep.widths, rep.counts)]
    _write_csv(run_dir(args, cfg) / f"footprint_{args.kind}.csv",
               ["depth", "width_rows", "width_cols", "count"], rows)
    for d, wy, wx, n in rows:
        print(f"depth {d}: width {wy}x{wx}, {n} pixels")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import run_gradient_suite

    cfg = load_run_config(args)

    def report(r):
        print(f"{'PASS' if r.passed else 'FAIL'} {r.kind:9s} {r.name}: "
              f"rel err {r.error:.2e} (tol {r.tolerance:.0e})")

    results = run_gradient_suite(cfg.seed, on_result=report)
    _write_csv(run_dir(args, cfg) / "gradcheck.csv", ["name", "kind", "rel_error", "tolerance"],
               [[r.name, r.kind, repr(r.error), repr(r.tolerance)] for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_eval_proxy(args) -> int:
    cfg = load_run_config(args)
    trainer = _trainer(args, cfg)
    score, dist = trainer.evaluate()
    _write_csv(run_dir(args, cfg) / "eval.csv", ["iter", "blocking_score", "proxy_distance"],
               [[trainer.iteration, repr(score), repr(dist)]])
    print(f"iter {trainer.iteration}: proxy_distance={dist:.6f} blocking_score={score:.6f}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file (TOML)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--run-dir", help="output directory (default: [run] out_dir)")

    p = _Parser(prog="deskswin", description="Desk-scale window-attention GAN toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", parents=[common], help="train and write metrics/checkpoints")
    t.add_argument("--iters", type=int, help="train until this iteration")
    t.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", parents=[common], help="write a grid of EMA samples")
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--checkpoint")
    s.add_argument("--out", default="samples.png")
    s.set_defaults(func=cmd_sample)

    i = sub.add_parser("interpolate", parents=[common], help="latent interpolation strip")
    i.add_argument("--steps", type=int, default=8)
    i.add_argument("--checkpoint")
    i.add_argument("--out", default="interpolation.png")
    i.set_defaults(func=cmd_interpolate)

    a = sub.add_parser("analyze-spectrum", parents=[common], help="Fourier spectrum and blocking")
    a.add_argument("--image", help="PNG to analyze (default: EMA samples)")
    a.add_argument("--n", type=int, default=64)
    a.add_argument("--window", type=int)
    a.add_argument("--checkpoint")
    a.set_defaults(func=cmd_analyze_spectrum)

    d = sub.add_parser("demo-1d", parents=[common], help="1D window-attention discontinuities")
    d.add_argument("--window", type=int, default=8)
    d.add_argument("--length", type=int, default=64)
    d.add_argument("--seeds", type=int, default=10)
    d.set_defaults(func=cmd_demo_1d)

    f = sub.add_parser("footprint", parents=[common], help="receptive-field footprint probe")
    f.add_argument("--kind", choices=("double", "swin", "regular"), default="double")
    f.add_argument("--depth", type=int, default=8)
    f.add_argument("--size", type=int, default=64)
    f.add_argument("--window", type=int, default=8)
    f.add_argument("--dim", type=int, default=16)
    f.add_argument("--heads", type=int, default=2)
    f.set_defaults(func=cmd_footprint)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    g.set_defaults(func=cmd_gradcheck)

    e = sub.add_parser("eval-proxy", parents=[common], help="proxy distance of EMA samples")
    e.add_argument("--checkpoint")
    e.set_defaults(func=cmd_eval_proxy)
    return p


def main(argv=None) -> int:
    from .generator import NumericalFault
    from .io import CheckpointError

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"deskswin: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"deskswin: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except (NumericalFault, CheckpointError, OSError) as exc:
        print(f"deskswin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
