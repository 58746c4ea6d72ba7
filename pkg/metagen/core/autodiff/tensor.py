"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 array. Every operation on tensors that need
gradients records its parents and a backward closure; ``loss.backward()`` walks
that graph once in reverse topological order. Leaves (parameters) accumulate
gradients across calls until they are zeroed; intermediate nodes get a fresh
gradient buffer per backward pass.

A graph can be backpropagated exactly once. Calling ``backward`` again on the
same loss raises :class:`GraphError`; build a new forward pass instead.
"""

from collections.abc import Callable, Sequence

import numpy as np

from metagen.core.errors import GraphError, ShapeMismatchError


class Tensor:
    __slots__ = ("_backward", "_consumed", "_op", "_parents", "data", "grad", "requires_grad")

    def __init__(self, data, *, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"
        self._consumed = False

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence[Tensor],
        op: str,
        backward: Callable[[np.ndarray], None],
    ) -> Tensor:
        """Create the result node of ``op``; the backward closure is only kept when a parent needs it."""
        out = cls(data)
        out._op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        return out

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def _topological_order(self) -> list[Tensor]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if id(parent) not in seen)
        return order

    def backward(self) -> None:
        if self.data.size != 1:
            msg = f"backward() needs a scalar loss, got shape {self.shape}"
            raise GraphError(msg)
        if self._consumed:
            msg = "this graph was already backpropagated; run a new forward pass"
            raise GraphError(msg)
        if not self.requires_grad:
            msg = "loss does not depend on any tensor that requires a gradient"
            raise GraphError(msg)

        order = self._topological_order()
        for node in order:
            if not node.is_leaf:
                node.grad = None
        accumulate_grad(self, np.ones_like(self.data))
        for node in reversed(order):
            if node.is_leaf:
                continue
            if node.grad is not None:
                node._backward(node.grad)
            node._consumed = True

    # operator sugar, so layer code reads like maths
    def __add__(self, other) -> Tensor:
        return add(self, other)

    def __radd__(self, other) -> Tensor:
        return add(other, self)

    def __sub__(self, other) -> Tensor:
        return sub(self, other)

    def __mul__(self, other) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other) -> Tensor:
        return mul(other, self)

    def __matmul__(self, other) -> Tensor:
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def accumulate_grad(node: Tensor, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64)
    else:
        node.grad = node.grad + grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcast to reach it from ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchError(op, a.shape, b.shape) from e


# Elementwise
# ----------------------------------------------------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        accumulate_grad(a, _unbroadcast(g, a.shape))
        accumulate_grad(b, _unbroadcast(g, b.shape))

    return Tensor.from_op(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        accumulate_grad(a, _unbroadcast(g, a.shape))
        accumulate_grad(b, _unbroadcast(-g, b.shape))

    return Tensor.from_op(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        accumulate_grad(a, _unbroadcast(g * b.data, a.shape))
        accumulate_grad(b, _unbroadcast(g * a.data, b.shape))

    return Tensor.from_op(a.data * b.data, (a, b), "mul", backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        accumulate_grad(a, g * factor)

    return Tensor.from_op(a.data * factor, (a,), "scale", backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        accumulate_grad(a, g * out_data)

    return Tensor.from_op(out_data, (a,), "exp", backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def backward(g):
        accumulate_grad(a, g * mask)

    return Tensor.from_op(np.where(mask, a.data, 0.0), (a,), "relu", backward)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    """Clamp to ``[low, high]``; the gradient is passed only where the input was inside."""
    inside = (a.data >= low) & (a.data <= high)

    def backward(g):
        accumulate_grad(a, g * inside)

    return Tensor.from_op(np.clip(a.data, low, high), (a,), "clip", backward)


# Structural
# ----------------------------------------------------------------------------------------------------------------------


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(x) for x in xs]
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeMismatchError("concat", tensors[0].shape, tensors[-1].shape) from e
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, start, stop in zip(tensors, bounds[:-1], bounds[1:], strict=True):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            accumulate_grad(t, g[tuple(index)])

    return Tensor.from_op(out_data, tensors, "concat", backward)


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``[start, stop)`` of the last axis."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        accumulate_grad(a, full)

    return Tensor.from_op(a.data[..., start:stop], (a,), "columns", backward)


# Linear algebra and reductions
# ----------------------------------------------------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:  # noqa: PLR2004 - matrices only
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def backward(g):
        accumulate_grad(a, g @ b.data.T)
        accumulate_grad(b, a.data.T @ g)

    return Tensor.from_op(a.data @ b.data, (a, b), "matmul", backward)


def affine(x, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for a ``(batch, in)`` input and an ``[out × in]`` weight."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != weight.shape[1]:  # noqa: PLR2004 - (batch, features)
        raise ShapeMismatchError("affine", x.shape, weight.shape)

    def backward(g):
        accumulate_grad(x, g @ weight.data)
        accumulate_grad(weight, g.T @ x.data)
        accumulate_grad(bias, g.sum(axis=0))

    return Tensor.from_op(x.data @ weight.data.T + bias.data, (x, weight, bias), "affine", backward)


def tensor_sum(a: Tensor) -> Tensor:
    def backward(g):
        accumulate_grad(a, np.broadcast_to(g, a.shape))

    return Tensor.from_op(np.array(a.data.sum()), (a,), "sum", backward)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        accumulate_grad(a, np.broadcast_to(g / n, a.shape))

    return Tensor.from_op(np.array(a.data.mean()), (a,), "mean", backward)
