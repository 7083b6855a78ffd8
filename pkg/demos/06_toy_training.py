# %% [markdown]
# # A short toy training run
#
# Two-blobs images at 16 x 16 with a shrunken model. The run logs metrics,
# saves a checkpoint and then proves that resuming replays the same numbers.

# %%
import os
from pathlib import Path

from deskswin.config import RunConfig
from deskswin.io import read_metrics
from deskswin.run import Trainer

root = Path(os.environ.get("DESKSWIN_OUTPUT_ROOT", ".")) / "demo_out" / "toy"

# %%
cfg = RunConfig()
cfg.train.batch_size = 4
cfg.run.eval_interval = 10
cfg.run.eval_samples = 32
cfg.run.checkpoint_interval = 10
rows = Trainer(cfg).run(20, root / "full")
for r in rows[::5]:
    print(f"iter {r.iter:3d}  D {r.loss_d:.3f}  G {r.loss_g:.3f}  proxy {r.proxy_distance}")

# %% [markdown]
# Stop at 10, reload from disk, and continue to 20.

# %%
Trainer(cfg).run(10, root / "part")
resumed = Trainer.from_checkpoint(root / "part" / "checkpoint.bin")
resumed.run(20, root / "part")
same = read_metrics(root / "full" / "metrics.csv") == read_metrics(root / "part" / "metrics.csv")
print("resumed run matches:", same)
