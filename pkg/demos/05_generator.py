# %% [markdown]
# # The style-based transformer generator
#
# z goes through the mapping network to w. A learned constant grid is
# refined scale by scale by double-attention blocks whose norms take their
# scale and shift from w. Sinusoidal position codes are added at each scale.

# %%
import os
from pathlib import Path

import numpy as np

from deskswin import set_default_dtype
from deskswin.config import desk_generator
from deskswin.generator import Generator, spe_encode
from deskswin.io import write_sample_grid
from deskswin.run import sample

set_default_dtype(np.float64)
out_dir = Path(os.environ.get("DESKSWIN_OUTPUT_ROOT", ".")) / "demo_out"
out_dir.mkdir(parents=True, exist_ok=True)

# %%
cfg = desk_generator(16)
g = Generator(cfg, np.random.default_rng(0))
print("scales", cfg.sizes(), "dims", cfg.dims, "windows", cfg.windows)
print("parameters", g.num_parameters())

# %%
table = spe_encode(4, 4, 8)
print("position code at (row 1, col 2):", np.round(table[1, 2], 3))

# %% [markdown]
# Untrained samples and a straight-line walk between two latents.

# %%
z = np.random.default_rng(1).standard_normal((2, cfg.z_dim))
steps = np.linspace(0.0, 1.0, 6)[:, None]
walk = sample(g, (1 - steps) * z[0] + steps * z[1])
write_sample_grid(walk, out_dir / "walk.png", ncols=6)
print("wrote", out_dir / "walk.png", walk.shape)
