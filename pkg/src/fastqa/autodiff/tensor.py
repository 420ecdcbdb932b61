"""Tensor type, recorded operation nodes and the reverse-mode sweep."""

from __future__ import annotations

import contextlib
import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_node_ids = itertools.count()
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Suspend node recording in this thread (inference)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an operation."""

    def __init__(self, op: str, *dims, detail: str = ""):
        self.op = op
        self.dims = dims
        shapes = ", ".join(str(tuple(d)) for d in dims)
        msg = f"{op}: incompatible shapes {shapes}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainError(ArithmeticError):
    """Raised instead of producing NaN/Inf (log of non-positive, exp overflow)."""


class Node:
    """One recorded operation. Ids are issued monotonically, so inputs always
    carry smaller ids than the node consuming them."""

    __slots__ = ("id", "op", "inputs", "backward_fn", "__weakref__")

    def __init__(self, op: str, inputs: tuple, backward_fn: Callable):
        self.id = next(_node_ids)
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn

    def __repr__(self):
        return f"Node({self.id}, {self.op})"


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64 if dtype is None else dtype)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = None

    def backward(self, reset: bool = False):
        backward(self, reset=reset)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from . import ops
        return ops.index(self, key)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    """Wrap arrays and scalars as constant tensors, matching ``like``'s dtype."""
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False, dtype=dtype)


def make_result(data: np.ndarray, op: str, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Build an op output; a node is recorded only if some input needs gradients."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    needs = grad_enabled() and any(t.requires_grad for t in inputs)
    out.requires_grad = needs
    out._node = Node(op, tuple(inputs), backward_fn) if needs else None
    return out


@dataclass
class Graph:
    """Nodes reachable from a tensor, in creation (= topological) order."""

    nodes: list = field(default_factory=list)
    outputs: list = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "Graph":
        seen = {}
        stack = [out]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None or node.id in seen:
                continue
            seen[node.id] = (node, t)
            stack.extend(node.inputs)
        ordered = [seen[k] for k in sorted(seen)]
        return cls(nodes=[n for n, _ in ordered], outputs=[t for _, t in ordered])

    def leaves(self) -> list:
        found, ids = [], set()
        for node in self.nodes:
            for t in node.inputs:
                if t._node is None and t.requires_grad and id(t) not in ids:
                    ids.add(id(t))
                    found.append(t)
        return found


def backward(loss: Tensor, reset: bool = False, graph: Graph | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every trainable leaf.

    Repeated calls accumulate; ``reset=True`` zeroes leaf gradients first.
    """
    if loss.data.size != 1:
        raise ShapeError("backward", loss.shape, detail="loss must be a scalar")
    if graph is None:
        graph = Graph.from_output(loss)
    if reset:
        for leaf in graph.leaves():
            leaf.grad = None
    if loss._node is None:
        if loss.requires_grad:
            _accumulate_leaf(loss, np.ones_like(loss.data))
        return
    grads = {loss._node.id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if t._node is not None:
                key = t._node.id
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
            else:
                _accumulate_leaf(t, gi)


def _accumulate_leaf(t: Tensor, g: np.ndarray):
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g
