"""Dense tensor with reverse-mode autodiff.

Every backward rule is written in terms of differentiable tensor ops, so a
backward pass run with ``create_graph=True`` is itself differentiable. That
is what the R1 penalty needs (gradient of a gradient norm).
"""
from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An autodiff precondition was violated."""


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def set_grad_enabled(mode: bool):
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = bool(mode)
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def no_grad():
    return set_grad_enabled(False)


class Node:
    """One recorded op: its inputs and the rule mapping output grad to input grads."""

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op: str, inputs: tuple, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward

    def __repr__(self):
        return f"Node({self.op})"


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind in "fiub":
            arr = arr.astype(_DEFAULT_DTYPE, copy=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self._node: Node | None = None
        self.name = name

    @classmethod
    def _raw(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t._node = None
        t.name = None
        return t

    # -- array protocol ---------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor._raw(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- autodiff ---------------------------------------------------------
    def backward(self, grad=None, create_graph: bool = False) -> None:
        backward(self, grad=grad, create_graph=create_graph)

    # -- operators (implemented in ops) -----------------------------------
    def __add__(self, other):
        return _ops.add(self, other)

    def __radd__(self, other):
        return _ops.add(other, self)

    def __sub__(self, other):
        return _ops.sub(self, other)

    def __rsub__(self, other):
        return _ops.sub(other, self)

    def __mul__(self, other):
        return _ops.mul(self, other)

    def __rmul__(self, other):
        return _ops.mul(other, self)

    def __truediv__(self, other):
        return _ops.div(self, other)

    def __rtruediv__(self, other):
        return _ops.div(other, self)

    def __neg__(self):
        return _ops.neg(self)

    def __pow__(self, p):
        return _ops.power(self, p)

    def __matmul__(self, other):
        return _ops.matmul(self, other)

    def __getitem__(self, idx):
        return _ops.getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return _ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops.transpose(self, axes or None)

    def swapaxes(self, a, b):
        return _ops.swapaxes(self, a, b)

    def exp(self):
        return _ops.exp(self)

    def log(self):
        return _ops.log(self)

    def tanh(self):
        return _ops.tanh(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def make_result(data: np.ndarray, inputs: Sequence[Tensor], backward, op: str) -> Tensor:
    """Wrap an op's output and, when any input is tracked, record its node."""
    out = Tensor._raw(data)
    if _GRAD_ENABLED:
        for t in inputs:
            if t.requires_grad:
                out.requires_grad = True
                out._node = Node(op, tuple(inputs), backward)
                break
    return out


class Tape:
    """Topologically ordered record of the ops reachable from some roots.

    ``tensors`` lists inputs before the ops that consume them; a backward
    sweep walks it in reverse.
    """

    def __init__(self, tensors: list[Tensor]):
        self.tensors = tensors

    @classmethod
    def from_roots(cls, roots: Iterable[Tensor]) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(r, False) for r in roots]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t._node is not None:
                for p in t._node.inputs:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))
        return cls(order)

    @property
    def nodes(self) -> list[Node]:
        return [t._node for t in self.tensors if t._node is not None]

    def __len__(self):
        return len(self.nodes)

    def run(self, roots, root_grads, create_graph=False, capture=None, accumulate=True):
        grads: dict[int, Tensor] = {}
        for r, g in zip(roots, root_grads):
            grads[id(r)] = g if id(r) not in grads else grads[id(r)] + g
        captured: dict[int, Tensor] = {}
        with set_grad_enabled(create_graph):
            for t in reversed(self.tensors):
                g = grads.pop(id(t), None)
                if g is None:
                    continue
                if capture is not None and id(t) in capture:
                    captured[id(t)] = g
                node = t._node
                if node is None:
                    if accumulate and t.requires_grad:
                        t.grad = g if t.grad is None else t.grad + g
                    continue
                for inp, ig in zip(node.inputs, node.backward(g, t)):
                    if ig is None or not inp.requires_grad:
                        continue
                    key = id(inp)
                    grads[key] = ig if key not in grads else grads[key] + ig
        return captured


def _root_grad(out: Tensor, grad) -> Tensor:
    if grad is None:
        if out.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {out.shape}")
        return Tensor._raw(np.ones_like(out.data))
    grad = as_tensor(grad, like=out)
    if grad.shape != out.shape:
        raise ShapeError(f"grad shape {grad.shape} does not match output shape {out.shape}")
    return grad


def backward(loss: Tensor, grad=None, create_graph: bool = False, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")
    g = _root_grad(loss, grad)
    tape = tape or Tape.from_roots([loss])
    tape.run([loss], [g], create_graph=create_graph)


def grad(outputs, inputs, grad_outputs=None, create_graph: bool = False) -> list[Tensor]:
    """Return d(outputs)/d(inputs) without touching ``.grad``.

    Inputs the outputs do not depend on get zero gradients.
    """
    outputs = [outputs] if isinstance(outputs, Tensor) else list(outputs)
    single = isinstance(inputs, Tensor)
    inputs = [inputs] if single else list(inputs)
    if grad_outputs is None:
        grad_outputs = [None] * len(outputs)
    elif isinstance(grad_outputs, Tensor):
        grad_outputs = [grad_outputs]
    roots, root_grads = [], []
    for o, go in zip(outputs, grad_outputs):
        if o.requires_grad:
            roots.append(o)
            root_grads.append(_root_grad(o, go))
    capture = {id(t) for t in inputs}
    got = {}
    if roots:
        got = Tape.from_roots(roots).run(roots, root_grads, create_graph=create_graph,
                                         capture=capture, accumulate=False)
    res = [got.get(id(t)) for t in inputs]
    res = [Tensor._raw(np.zeros_like(t.data)) if g is None else g for t, g in zip(inputs, res)]
    return res[0] if single else res


from . import ops as _ops  # noqa: E402  (circular: ops builds on Tensor)
