import numpy as np

from deskswin.io import load_checkpoint, read_metrics
from deskswin.run import Trainer

from .conftest import tiny_run_config


def test_identical_seeds_give_identical_metrics(tiny_cfg):
    a = [r.as_dict() for r in Trainer(tiny_cfg).run(8)]
    b = [r.as_dict() for r in Trainer(tiny_cfg).run(8)]
    assert a == b
    assert a[0]["proxy_distance"] is not None and a[1]["proxy_distance"] is None


def test_different_seeds_differ(tiny_cfg):
    a = [r.loss_d for r in Trainer(tiny_cfg).run(3)]
    tiny_cfg.seed = 99
    b = [r.loss_d for r in Trainer(tiny_cfg).run(3)]
    assert a != b


def test_resume_replays_bit_identically(tmp_path):
    full_dir, part_dir = tmp_path / "full", tmp_path / "part"
    full = Trainer(tiny_run_config(full_dir)).run(10, full_dir)
    Trainer(tiny_run_config(part_dir)).run(5, part_dir)
    resumed = Trainer.from_checkpoint(part_dir / "checkpoint.bin")
    assert resumed.iteration == 5
    tail = resumed.run(10, part_dir)
    assert [r.as_dict() for r in tail] == [r.as_dict() for r in full[5:]]
    assert read_metrics(part_dir / "metrics.csv") == read_metrics(full_dir / "metrics.csv")
    a, b = load_checkpoint(full_dir / "checkpoint.bin"), load_checkpoint(part_dir / "checkpoint.bin")
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


def test_run_writes_artifacts_under_run_dir(tmp_path):
    out = tmp_path / "r"
    Trainer(tiny_run_config(out)).run(5, out)
    assert sorted(p.name for p in out.iterdir()) == ["checkpoint.bin", "config.toml",
                                                     "metrics.csv", "samples.png"]
    assert len(read_metrics(out / "metrics.csv")) == 5


def test_checkpoint_carries_spectral_vectors_and_moments(tmp_path):
    tr = Trainer(tiny_run_config(tmp_path))
    tr.run(2)
    names = tr.checkpoint().tensors
    assert any(k.startswith("d.") and k.endswith(".sn.u") for k in names)
    assert "opt_d.t" in names and "opt_g.m.0" in names
    assert any(k.startswith("ema.") for k in names)


def test_ema_samples_within_unit_range(tiny_cfg):
    imgs = Trainer(tiny_cfg).ema_samples(4)
    assert imgs.shape == (4, 8, 8, 3) and np.abs(imgs).max() <= 1.0
