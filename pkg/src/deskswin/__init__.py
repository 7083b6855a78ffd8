"""deskswin: a numpy window-attention GAN with its own autodiff engine.

Subpackages are imported lazily by users; the names below are the common
entry points.
"""
from .attention import ConfigError
from .tensor import (ContractError, ShapeError, Tensor, default_dtype, grad, no_grad,
                     set_default_dtype)

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "ShapeError", "Tensor", "default_dtype", "grad",
           "no_grad", "set_default_dtype", "__version__"]
