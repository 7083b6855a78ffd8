# %% [markdown]
# # Why window attention leaves blocking artifacts
#
# Tokens only see their own window, so a smooth input can produce jumps at
# window edges. In 2D those jumps repeat with the window period and show up as
# a lattice of peaks in the Fourier spectrum.

# %%
import os
from pathlib import Path

import numpy as np

from deskswin.analysis import blocking_score, demo_1d_window_attention, fft2_log_magnitude
from deskswin.io import write_heatmap

out_dir = Path(os.environ.get("DESKSWIN_OUTPUT_ROOT", ".")) / "demo_out"
out_dir.mkdir(parents=True, exist_ok=True)

# %%
ramp = np.linspace(0.0, 1.0, 64)
out, ratio = demo_1d_window_attention(ramp, 8, seed=0)
print("mean |step| across window edges / inside windows:", round(ratio, 1))

# %% [markdown]
# A blocky image (one random level per 8 x 8 tile) against the same image
# box-filtered 8 pixels wide, and a smooth ramp for reference.

# %%
rng = np.random.default_rng(0)
blocky = np.kron(rng.standard_normal((8, 8)), np.ones((8, 8)))
box = np.zeros(64)
box[:8] = 1 / 8
k = np.fft.fft(np.roll(box, -4))
blurred = np.real(np.fft.ifft2(np.fft.fft2(blocky) * k[:, None] * k[None, :]))
yy, xx = np.mgrid[0:64, 0:64] / 64.0
for name, img in (("blocky", blocky), ("blurred", blurred), ("ramp", xx + 0.5 * yy)):
    print(f"{name:8s} blocking score {blocking_score(img, 8):.4f}")

# %%
spec = fft2_log_magnitude(blocky)
write_heatmap(spec.log_magnitude, out_dir / "blocky_spectrum.png")
print("wrote", out_dir / "blocky_spectrum.png")
