"""Reverse-mode differentiation over dense float64 arrays.

Each primitive builds a ``Variable`` that remembers its parents and a closure
pushing the output gradient back to them. ``Variable.backward`` walks the
graph in reverse topological order. Graphs are rebuilt on every call; nothing
is taped persistently.
"""

from collections.abc import Callable, Sequence

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NonFiniteError, ShapeError

Tensor = npt.NDArray[np.float64]


def as_tensor(value: npt.ArrayLike) -> Tensor:
    """Convert to a contiguous float64 array."""
    return np.ascontiguousarray(value, dtype=np.float64)


def check_finite(array: np.ndarray, what: str) -> None:
    """Raise NonFiniteError if the array holds NaN or Inf."""
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"non-finite value in {what}")


class Variable:
    """A node in the differentiation graph."""

    __slots__ = ("data", "grad", "op", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data: npt.ArrayLike,
        parents: Sequence["Variable"] = (),
        op: str = "",
        requires_grad: bool = True,
    ):
        self.data = as_tensor(data)
        check_finite(self.data, op or "leaf")
        self.grad: Tensor | None = None
        self.op = op
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward: Callable[[Tensor], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, grad: Tensor) -> None:
        """Add an incoming gradient; fan-out nodes sum contributions."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64, copy=True)
        else:
            self.grad += grad

    def backward(self, seed: npt.ArrayLike | None = None) -> None:
        """Propagate gradients from this node to every ancestor."""
        order: list[Variable] = []
        visited: set[int] = set()
        stack: list[tuple[Variable, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        if seed is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = np.broadcast_to(as_tensor(seed), self.data.shape).copy()

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                check_finite(node.grad, f"gradient of {node.op}")
                node._backward(node.grad)

    def __add__(self, other: "Variable | float") -> "Variable":
        return add(self, _lift(other))

    def __radd__(self, other: float) -> "Variable":
        return add(_lift(other), self)

    def __sub__(self, other: "Variable | float") -> "Variable":
        return add(self, neg(_lift(other)))

    def __rsub__(self, other: float) -> "Variable":
        return add(_lift(other), neg(self))

    def __mul__(self, other: "Variable | float") -> "Variable":
        return mul(self, _lift(other))

    def __rmul__(self, other: float) -> "Variable":
        return mul(_lift(other), self)

    def __neg__(self) -> "Variable":
        return neg(self)

    def __repr__(self) -> str:
        return f"Variable(shape={self.shape}, op={self.op!r})"


def _lift(value: "Variable | float") -> Variable:
    return value if isinstance(value, Variable) else Variable(value, op="const")


def _unbroadcast(grad: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ===== ELEMENTWISE =====


def add(a: Variable, b: Variable) -> Variable:
    out = Variable(a.data + b.data, (a, b), "add")

    def _backward(g: Tensor) -> None:
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    out._backward = _backward
    return out


def mul(a: Variable, b: Variable) -> Variable:
    out = Variable(a.data * b.data, (a, b), "mul")

    def _backward(g: Tensor) -> None:
        a.accumulate(_unbroadcast(g * b.data, a.shape))
        b.accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = _backward
    return out


def neg(a: Variable) -> Variable:
    out = Variable(-a.data, (a,), "neg")
    out._backward = lambda g: a.accumulate(-g)
    return out


def relu(a: Variable) -> Variable:
    mask = a.data > 0
    out = Variable(np.where(mask, a.data, 0.0), (a,), "relu")
    # subgradient 0 at the kink
    out._backward = lambda g: a.accumulate(g * mask)
    return out


def sigmoid(a: Variable) -> Variable:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    out = Variable(s, (a,), "sigmoid")
    out._backward = lambda g: a.accumulate(g * s * (1.0 - s))
    return out


def square(a: Variable) -> Variable:
    out = Variable(a.data * a.data, (a,), "square")
    out._backward = lambda g: a.accumulate(2.0 * a.data * g)
    return out


# ===== REDUCTIONS AND INDEXING =====


def reduce_sum(a: Variable, axis: int | tuple[int, ...] | None = None) -> Variable:
    out = Variable(np.sum(a.data, axis=axis), (a,), "sum")

    def _backward(g: Tensor) -> None:
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.shape))
        else:
            a.accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    out._backward = _backward
    return out


def reduce_mean(a: Variable, axis: int | tuple[int, ...] | None = None) -> Variable:
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return reduce_sum(a, axis) * (1.0 / count)


def pick(a: Variable, index: Sequence[int] | np.ndarray) -> Variable:
    """Select ``a[i, index[i]]`` for every row of a 2-D variable."""
    rows = np.arange(a.shape[0])
    cols = np.asarray(index, dtype=np.int64)
    out = Variable(a.data[rows, cols], (a,), "pick")

    def _backward(g: Tensor) -> None:
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        a.accumulate(full)

    out._backward = _backward
    return out


def reshape(a: Variable, shape: tuple[int, ...]) -> Variable:
    out = Variable(a.data.reshape(shape), (a,), "reshape")
    out._backward = lambda g: a.accumulate(g.reshape(a.shape))
    return out


# ===== SOFTMAX FAMILY =====


def softmax_rows(a: Variable) -> Variable:
    """Softmax along the last axis, stabilized by max-subtraction."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Variable(s, (a,), "softmax")
    out._backward = lambda g: a.accumulate(s * (g - np.sum(g * s, axis=-1, keepdims=True)))
    return out


def log_softmax_rows(a: Variable) -> Variable:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    value = shifted - log_norm
    out = Variable(value, (a,), "log_softmax")
    probs = np.exp(value)
    out._backward = lambda g: a.accumulate(g - probs * g.sum(axis=-1, keepdims=True))
    return out


def cross_entropy(logits: Variable, labels: Sequence[int] | np.ndarray) -> Variable:
    """Per-sample cross-entropy of a (N, k) logit batch."""
    return neg(pick(log_softmax_rows(logits), labels))


# ===== LAYER PRIMITIVES =====


def affine(x: Variable, weight: Variable, bias: Variable) -> Variable:
    """``x @ weight.T + bias`` for x of shape (N, in), weight (out, in)."""
    out = Variable(x.data @ weight.data.T + bias.data, (x, weight, bias), "affine")

    def _backward(g: Tensor) -> None:
        x.accumulate(g @ weight.data)
        if weight.requires_grad:
            weight.accumulate(g.T @ x.data)
            bias.accumulate(g.sum(axis=0))

    out._backward = _backward
    return out


def conv2d(x: Variable, weight: Variable, bias: Variable) -> Variable:
    """Valid, stride-1 cross-correlation of NCHW input with OCKK weights."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape[1]}, weight {weight.shape[1]}"
        )
    kh, kw = weight.shape[2], weight.shape[3]
    windows = sliding_window_view(x.data, (kh, kw), axis=(2, 3))
    value = np.einsum("nchwij,ocij->nohw", windows, weight.data, optimize=True)
    value += bias.data[None, :, None, None]
    out = Variable(value, (x, weight, bias), "conv2d")
    out_h, out_w = value.shape[2], value.shape[3]

    def _backward(g: Tensor) -> None:
        if weight.requires_grad:
            weight.accumulate(np.einsum("nohw,nchwij->ocij", g, windows, optimize=True))
            bias.accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i : i + out_h, j : j + out_w] += np.einsum(
                    "nohw,oc->nchw", g, weight.data[:, :, i, j], optimize=True
                )
        x.accumulate(dx)

    out._backward = _backward
    return out


def max_pool2d(x: Variable, size: int) -> Variable:
    """Non-overlapping ``size``x``size`` max pooling; ties route to the first maximum."""
    n, c, h, w = x.shape
    out_h, out_w = h // size, w // size
    if out_h == 0 or out_w == 0:
        raise ShapeError(f"max_pool2d window {size} larger than input {h}x{w}")
    cropped = x.data[:, :, : out_h * size, : out_w * size]
    blocks = (
        cropped.reshape(n, c, out_h, size, out_w, size)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, out_h, out_w, size * size)
    )
    winner = blocks.argmax(axis=-1)
    value = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]
    out = Variable(value, (x,), "max_pool2d")

    def _backward(g: Tensor) -> None:
        routed = np.zeros_like(blocks)
        np.put_along_axis(routed, winner[..., None], g[..., None], axis=-1)
        routed = (
            routed.reshape(n, c, out_h, out_w, size, size)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, out_h * size, out_w * size)
        )
        dx = np.zeros_like(x.data)
        dx[:, :, : out_h * size, : out_w * size] = routed
        x.accumulate(dx)

    out._backward = _backward
    return out


def softmax(logits: npt.ArrayLike) -> Tensor:
    """
    Softmax of a 1-D logit vector.

    Raises:
        ShapeError: If the input is not 1-D or is empty
    """
    z = as_tensor(logits)
    if z.ndim != 1 or z.size == 0:
        raise ShapeError(f"softmax expects a non-empty 1-D vector, got shape {z.shape}")
    return softmax_rows(Variable(z, op="logits")).data
