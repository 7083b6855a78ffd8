# %% [markdown]
# # Haar wavelets and the wavelet discriminator
#
# The discriminator sees the image as Haar sub-bands at every scale, so
# high-frequency energy (where blocking lives) gets its own input path.

# %%
import numpy as np

from deskswin import Tensor, set_default_dtype
from deskswin.discriminator import (Discriminator, DiscriminatorConfig, SpectralNorm,
                                    haar_dwt, haar_idwt)

set_default_dtype(np.float64)
rng = np.random.default_rng(0)

# %%
x = rng.standard_normal((1, 16, 16, 3))
bands = haar_dwt(Tensor(x))
print("band shapes:", [b.shape for b in bands])
print("reconstruction error:", np.abs(haar_idwt(bands).data - x).max())
print("energy kept:", bands.energy() / np.sum(x ** 2))

# %% [markdown]
# Spectral normalisation keeps each layer 1-Lipschitz using a persistent
# power-iteration vector.

# %%
w = Tensor(np.diag([3.0, 1.0]))
sn = SpectralNorm(2, 2, rng=0)
for i in range(20):
    sn.step(w)
print("sigma estimate:", float(sn.sigma(w).data))

# %%
for kind in ("wavelet", "conv", "patch"):
    d = Discriminator(DiscriminatorConfig(kind=kind, channels=[8, 16, 32]), 16, rng)
    print(f"{kind:8s} logits {d(Tensor(x)).shape}, {d.num_parameters()} parameters")
