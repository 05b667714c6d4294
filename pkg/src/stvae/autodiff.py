"""Minimal define-by-run reverse-mode autodiff over dense 2-D float64 arrays.

A graph is rebuilt for every batch.  Nodes are numbered at creation, so
visiting them in decreasing creation order is a valid reverse topological
order and makes gradient accumulation reproducible.
"""
from __future__ import annotations

import enum
import itertools
from typing import Callable, Sequence

import numpy as np

from . import special

_creation = itertools.count()


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class GraphError(RuntimeError):
    """Misuse of the graph, e.g. backward on a non-scalar or twice."""


class ActivationKind(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"
    IDENTITY = "identity"


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {arr.shape}")
    return arr


class Node:
    """A value in the computation graph together with its gradient slot."""

    __slots__ = ("value", "grad", "parents", "backward_rule", "order", "_consumed")

    def __init__(self, value, parents: Sequence[Node] = (), backward_rule: Callable | None = None):
        self.value = _as_matrix(value)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.order = next(_creation)
        self._consumed = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise GraphError(f"item() on node of shape {self.shape}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Node(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Node:
    return value if isinstance(value, Node) else Node(value)


parameter = constant


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _broadcast_shape(a: Node, b: Node, op: str) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")

    def rule(g):
        a.grad += _unbroadcast(g, a.shape)
        b.grad += _unbroadcast(g, b.shape)

    return Node(a.value + b.value, (a, b), rule)


def sub(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")

    def rule(g):
        a.grad += _unbroadcast(g, a.shape)
        b.grad -= _unbroadcast(g, b.shape)

    return Node(a.value - b.value, (a, b), rule)


def mul(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")

    def rule(g):
        a.grad += _unbroadcast(g * b.value, a.shape)
        b.grad += _unbroadcast(g * a.value, b.shape)

    return Node(a.value * b.value, (a, b), rule)


def div(a, b) -> Node:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "div")
    out = a.value / b.value

    def rule(g):
        a.grad += _unbroadcast(g / b.value, a.shape)
        b.grad -= _unbroadcast(g * out / b.value, b.shape)

    return Node(out, (a, b), rule)


def matmul(a: Node, b: Node) -> Node:
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def rule(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    return Node(a.value @ b.value, (a, b), rule)


def affine(x: Node, W: Node, b: Node) -> Node:
    """x @ W + b with the bias row broadcast over the batch."""
    x, W, b = constant(x), constant(W), constant(b)
    if x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine: input {x.shape} and weight {W.shape} do not conform")
    if b.shape != (1, W.shape[1]):
        raise DimensionError(f"affine: bias {b.shape} does not match weight {W.shape}")

    def rule(g):
        x.grad += g @ W.value.T
        W.grad += x.value.T @ g
        b.grad += g.sum(axis=0, keepdims=True)

    return Node(x.value @ W.value + b.value, (x, W, b), rule)


def _unary(x, out: np.ndarray, local_grad: np.ndarray) -> Node:
    x = constant(x)

    def rule(g):
        x.grad += g * local_grad

    return Node(out, (x,), rule)


def exp(x) -> Node:
    x = constant(x)
    out = np.exp(x.value)
    return _unary(x, out, out)


def log(x) -> Node:
    x = constant(x)
    return _unary(x, np.log(x.value), 1.0 / x.value)


def log1p(x) -> Node:
    x = constant(x)
    return _unary(x, np.log1p(x.value), 1.0 / (1.0 + x.value))


def sqrt(x) -> Node:
    x = constant(x)
    out = np.sqrt(x.value)
    return _unary(x, out, 0.5 / out)


def square(x) -> Node:
    x = constant(x)
    return _unary(x, x.value * x.value, 2.0 * x.value)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(v: np.ndarray) -> np.ndarray:
    # Identity above 30, where log1p(exp(x)) == x in float64.
    return np.where(v > 30.0, v, np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v))))


def sigmoid(x) -> Node:
    x = constant(x)
    s = _sigmoid(x.value)
    return _unary(x, s, s * (1.0 - s))


def softplus(x) -> Node:
    x = constant(x)
    return _unary(x, _softplus(x.value), _sigmoid(x.value))


def tanh(x) -> Node:
    x = constant(x)
    t = np.tanh(x.value)
    return _unary(x, t, 1.0 - t * t)


def relu(x) -> Node:
    x = constant(x)
    pos = x.value > 0.0
    return _unary(x, np.where(pos, x.value, 0.0), pos.astype(np.float64))


def identity(x) -> Node:
    return constant(x)


_ACTIVATIONS = {
    ActivationKind.RELU: relu,
    ActivationKind.TANH: tanh,
    ActivationKind.SIGMOID: sigmoid,
    ActivationKind.SOFTPLUS: softplus,
    ActivationKind.IDENTITY: identity,
}


def activation(x, kind: ActivationKind | str) -> Node:
    return _ACTIVATIONS[ActivationKind(kind)](x)


def digamma(x) -> Node:
    x = constant(x)
    return _unary(x, special.digamma_array(x.value), special.trigamma_array(x.value))


def sum(x, axis: int | None = None) -> Node:  # noqa: A001
    x = constant(x)
    if axis is None:
        out = x.value.sum().reshape(1, 1)
    else:
        out = x.value.sum(axis=axis, keepdims=True)

    def rule(g):
        x.grad += np.broadcast_to(g, x.shape)

    return Node(out, (x,), rule)


def mean(x) -> Node:
    x = constant(x)
    return mul(sum(x), 1.0 / x.value.size)


def tile_rows(x, reps: int) -> Node:
    """Stack ``reps`` copies of ``x`` vertically (copy-major order)."""
    x = constant(x)
    rows = x.shape[0]

    def rule(g):
        x.grad += g.reshape(reps, rows, -1).sum(axis=0)

    return Node(np.tile(x.value, (reps, 1)), (x,), rule)


def slice_rows(x, start: int, stop: int) -> Node:
    x = constant(x)

    def rule(g):
        x.grad[start:stop] += g

    return Node(x.value[start:stop], (x,), rule)


def _reachable(root: Node) -> list[Node]:
    seen = {id(root)}
    stack = [root]
    nodes = []
    while stack:
        node = stack.pop()
        nodes.append(node)
        for p in node.parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
    nodes.sort(key=lambda n: n.order, reverse=True)
    return nodes


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``grad`` of every reachable node."""
    if loss.shape != (1, 1):
        raise GraphError(f"backward needs a 1x1 loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward already ran on this graph; call reset() first")
    loss._consumed = True
    nodes = _reachable(loss)
    loss.grad += 1.0
    for node in nodes:
        if node.backward_rule is not None:
            node.backward_rule(node.grad)


def reset(loss: Node) -> None:
    """Zero every gradient reachable from ``loss`` and allow another backward pass."""
    for node in _reachable(loss):
        node.zero_grad()
    loss._consumed = False


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + eps
        fp = f(x.copy())
        x[i] = orig - eps
        fm = f(x.copy())
        x[i] = orig
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad
