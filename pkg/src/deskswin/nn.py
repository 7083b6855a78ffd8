"""A small module system: named parameters, buffers, state dicts."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import init, ops
from .tensor import Tensor


def Parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Base class; parameters are tracked tensors stored as attributes.

    Sub-modules may be stored directly or inside lists. Buffers are numpy
    arrays registered with :meth:`register_buffer`; they are persisted in the
    state dict but never receive gradients.
    """

    def __init__(self):
        object.__setattr__(self, "_buffers", OrderedDict())

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = value

    def __getattr__(self, name):
        buffers = self.__dict__.get("_buffers")
        if buffers is not None and name in buffers:
            return buffers[name]
        raise AttributeError(f"{type(self).__name__!s} has no attribute {name!r}")

    def __setattr__(self, name, value):
        buffers = self.__dict__.get("_buffers")
        if buffers is not None and name in buffers:
            buffers[name] = value
        else:
            object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in self.__dict__.items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in self.__dict__.items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._buffers.items():
            yield prefix + name, value
        for name, child in self.children():
            yield from child.named_buffers(prefix + name + ".")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())
        state.update((n, b.copy()) for n, b in self.named_buffers())
        return state

    def load_state_dict(self, state) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state dict is missing {sorted(missing)[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)
        for name in buffers:
            owner, attr = self._resolve(name)
            owner._buffers[attr] = np.array(state[name], copy=True)

    def _resolve(self, dotted: str):
        parts = dotted.split(".")
        obj = self
        i = 0
        while i < len(parts) - 1:
            nxt = getattr(obj, parts[i])
            if isinstance(nxt, (list, tuple)):
                nxt = nxt[int(parts[i + 1])]
                i += 1
            obj = nxt
            i += 1
        return obj, parts[-1]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    """y = x W + b with W stored as [in, out]."""

    def __init__(self, d_in: int, d_out: int, bias: bool = True, std: float = 0.02,
                 rng=None, weight: np.ndarray | None = None):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        w = weight if weight is not None else init.truncated_normal((d_in, d_out), std, rng)
        self.weight = Parameter(w)
        self.bias = Parameter(init.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int):
        super().__init__()
        self.gain = Parameter(init.ones(dim))
        self.bias = Parameter(init.zeros(dim))

    def forward(self, x: Tensor, w: Tensor | None = None) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias)


class MLP(Module):
    """Two-layer feed-forward network with GELU."""

    def __init__(self, dim: int, hidden: int, rng=None):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng=rng)
        self.fc2 = Linear(hidden, dim, rng=rng)

    def forward(self, x: Tensor, w: Tensor | None = None) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))
