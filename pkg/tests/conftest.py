import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deskswin.config import RunConfig
from deskswin.tensor import set_default_dtype

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def float64():
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_run_config(out_dir="run", **train) -> RunConfig:
    """A run small enough for sub-second steps: 8x8 images, two scales."""
    cfg = RunConfig()
    g = cfg.generator
    g.target_size, g.dims, g.windows, g.heads = 8, [16, 8], [4, 4], [2, 2]
    g.z_dim = g.w_dim = 8
    g.mapping_depth, g.blocks_per_scale, g.mlp_ratio = 2, 1, 2.0
    cfg.discriminator.channels = [4, 8]
    cfg.dataset.size, cfg.dataset.count = 8, 64
    cfg.train.batch_size, cfg.train.total_iters, cfg.train.lr_decay_start = 4, 20, 10
    cfg.train.r1_interval = 3
    for k, v in train.items():
        setattr(cfg.train, k, v)
    cfg.run.out_dir, cfg.run.eval_interval, cfg.run.eval_samples = str(out_dir), 4, 16
    cfg.run.checkpoint_interval = 5
    return cfg


@pytest.fixture
def tiny_cfg(tmp_path):
    return tiny_run_config(tmp_path / "run")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
