# %% [markdown]
# # Window attention, shifted windows and double attention
#
# Attention is restricted to k x k windows. Shifted windows roll the map by
# k/2 first (toroidally, no masks). Double attention gives half the heads the
# regular partition and half the shifted one inside a single block.

# %%
import numpy as np

from deskswin import Tensor, set_default_dtype
from deskswin.analysis import attention_stack, footprint_probe
from deskswin.attention import (cyclic_shift, split_heads, window_partition,
                                window_reverse)

set_default_dtype(np.float64)

# %%
x = np.arange(64.0).reshape(1, 8, 8, 1)
parts = window_partition(Tensor(x), 4)
print("windows:", parts.shape)
print("round trip exact:", np.array_equal(window_reverse(parts, 4, 8, 8).data, x))
print("shifted map corner:", cyclic_shift(Tensor(x), 2).data[0, :3, :3, 0])

# %%
regular, shifted = split_heads(16)
print("regular heads", list(regular), "shifted heads", list(shifted))

# %% [markdown]
# Receptive-field footprint of the centre pixel on a 64 x 64 map, window 8.
# Width is the cyclic extent of inputs with non-negligible gradient.

# %%
size, window, depth = 64, 8, 8
for kind in ("double", "swin", "regular"):
    stack = attention_stack(kind, 16, 8, window, depth, rng=0)
    rep = footprint_probe(stack, (1, size, size, 16), (size // 2, size // 2), depth)
    print(f"{kind:8s}", [w[0] for w in rep.widths])

# %% [markdown]
# Both interleaving schemes grow by one window per block. Double attention
# starts half a window ahead, so it reaches the full map one block earlier
# than alternating regular and shifted blocks.
