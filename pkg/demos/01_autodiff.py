# %% [markdown]
# # Reverse-mode autodiff on numpy
#
# Every model in the package is built from `Tensor` ops whose backward rules
# are themselves Tensor ops. That is what makes a gradient of a gradient
# possible, which the R1 penalty needs.

# %%
import numpy as np

from deskswin import Tensor, grad, set_default_dtype
from deskswin.checks import run_gradient_suite

set_default_dtype(np.float64)

# %%
x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
y = (x * x).tanh().sum()
gx = grad(y, x, create_graph=True)
print("dy/dx   ", gx.data)
print("analytic", 2 * x.data / np.cosh(x.data ** 2) ** 2)

# %% [markdown]
# Differentiate the gradient norm once more.

# %%
(hx,) = grad((gx * gx).sum(), [x])
print("d|g|^2/dx", hx.data)

# %% [markdown]
# The finite-difference suite covers every primitive and the composite
# blocks. Primitives must agree to 1e-4 relative error, composites to 1e-3.

# %%
results = run_gradient_suite(seed=0)
for r in results[-5:]:
    print(f"{r.name:32s} {r.kind:9s} err={r.error:.1e} tol={r.tolerance:.0e}")
print(sum(r.passed for r in results), "of", len(results), "checks pass")
