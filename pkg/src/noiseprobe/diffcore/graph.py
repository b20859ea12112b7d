"""Feed-forward graphs: an ordered layer list plus named parameter leaves."""

from abc import ABC, abstractmethod
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from ..errors import ShapeError
from . import tensor as T
from .tensor import Tensor, Variable, as_tensor


class Layer(ABC):
    """One primitive stage of a graph."""

    name: str = ""

    @abstractmethod
    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        """Build this layer's node on top of ``x``."""
        pass

    @abstractmethod
    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-sample output shape for a per-sample input shape."""
        pass

    def parameter_shapes(self, input_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
        """Shapes of the parameters this layer owns, keyed by full name."""
        return {}

    def describe(self) -> dict[str, Any]:
        return {"type": type(self).__name__, "name": self.name}


@dataclass
class Affine(Layer):
    name: str = field()
    units: int

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.affine(x, params[f"{self.name}.weight"], params[f"{self.name}.bias"])

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(input_shape) != 1:
            raise ShapeError(f"{self.name}: affine expects flat input, got {input_shape}")
        return (self.units,)

    def parameter_shapes(self, input_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
        return {
            f"{self.name}.weight": (self.units, input_shape[0]),
            f"{self.name}.bias": (self.units,),
        }

    def describe(self) -> dict[str, Any]:
        return {"type": "Affine", "name": self.name, "units": self.units}


@dataclass
class Conv2d(Layer):
    name: str = field()
    channels: int
    kernel: int

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.conv2d(x, params[f"{self.name}.weight"], params[f"{self.name}.bias"])

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if len(input_shape) != 3:
            raise ShapeError(f"{self.name}: conv2d expects (C, H, W), got {input_shape}")
        _, h, w = input_shape
        if h < self.kernel or w < self.kernel:
            raise ShapeError(f"{self.name}: kernel {self.kernel} larger than {h}x{w}")
        return (self.channels, h - self.kernel + 1, w - self.kernel + 1)

    def parameter_shapes(self, input_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
        return {
            f"{self.name}.weight": (self.channels, input_shape[0], self.kernel, self.kernel),
            f"{self.name}.bias": (self.channels,),
        }

    def describe(self) -> dict[str, Any]:
        return {"type": "Conv2d", "name": self.name, "channels": self.channels, "kernel": self.kernel}


@dataclass
class MaxPool2d(Layer):
    size: int = 2
    name: str = "pool"

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.max_pool2d(x, self.size)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        c, h, w = input_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"{self.name}: pool window {self.size} larger than {h}x{w}")
        return (c, h // self.size, w // self.size)

    def describe(self) -> dict[str, Any]:
        return {"type": "MaxPool2d", "name": self.name, "size": self.size}


@dataclass
class ReLU(Layer):
    name: str = "relu"

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.relu(x)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape


@dataclass
class Sigmoid(Layer):
    name: str = "sigmoid"

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.sigmoid(x)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape


@dataclass
class Flatten(Layer):
    name: str = "flatten"

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.reshape(x, (x.shape[0], -1))

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return (int(np.prod(input_shape)),)


@dataclass
class Reshape(Layer):
    shape: tuple[int, ...]
    name: str = "reshape"

    def apply(self, x: Variable, params: Mapping[str, Variable]) -> Variable:
        return T.reshape(x, (x.shape[0], *self.shape))

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        if int(np.prod(input_shape)) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {input_shape} to {self.shape}")
        return tuple(self.shape)

    def describe(self) -> dict[str, Any]:
        return {"type": "Reshape", "name": self.name, "shape": list(self.shape)}


LAYER_TYPES: dict[str, type[Layer]] = {
    "Affine": Affine,
    "Conv2d": Conv2d,
    "MaxPool2d": MaxPool2d,
    "ReLU": ReLU,
    "Sigmoid": Sigmoid,
    "Flatten": Flatten,
    "Reshape": Reshape,
}


def layer_from_dict(entry: Mapping[str, Any]) -> Layer:
    """Rebuild a layer from its ``describe()`` record."""
    kwargs = {key: value for key, value in entry.items() if key != "type"}
    if "shape" in kwargs:
        kwargs["shape"] = tuple(kwargs["shape"])
    return LAYER_TYPES[entry["type"]](**kwargs)


@dataclass
class Graph:
    """
    A differentiable feed-forward classifier.

    ``parameters`` maps names such as ``"dense1.weight"`` to float64 arrays.
    Forward and gradient calls never mutate the graph; training replaces
    parameter arrays between calls.
    """

    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...] = ()
    parameters: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.layers = tuple(self.layers)
        expected = self.parameter_shapes()
        for name, shape in expected.items():
            if name not in self.parameters:
                raise ShapeError(f"missing parameter {name}")
            if tuple(self.parameters[name].shape) != shape:
                raise ShapeError(
                    f"parameter {name} has shape {self.parameters[name].shape}, expected {shape}"
                )

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        shape = self.input_shape
        for layer in self.layers:
            shapes.update(layer.parameter_shapes(shape))
            shape = layer.output_shape(shape)
        return shapes

    @property
    def output_shape(self) -> tuple[int, ...]:
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    @property
    def class_count(self) -> int:
        return int(np.prod(self.output_shape))

    def build(
        self, batch: Tensor, track_parameters: bool = False
    ) -> tuple[Variable, dict[str, Variable], Variable]:
        """Build a fresh node graph for ``batch`` (N, *input_shape)."""
        x = Variable(batch, op="input")
        params = {
            name: Variable(value, op=name, requires_grad=track_parameters)
            for name, value in self.parameters.items()
        }
        out = x
        for layer in self.layers:
            out = layer.apply(out, params)
        if out.data.ndim != 2:
            out = T.reshape(out, (out.shape[0], -1))
        return x, params, out

    def as_batch(self, x: npt.ArrayLike) -> tuple[Tensor, bool]:
        """Return ``x`` as a batch and whether it was a single sample."""
        data = as_tensor(x)
        if data.shape == self.input_shape:
            return data[None, ...], True
        if data.shape[1:] == self.input_shape:
            return data, False
        raise ShapeError(
            f"input shape {data.shape} does not match graph input {self.input_shape}"
        )


Classifier = Any  # a Graph, or any object exposing one as ``.graph``


def as_graph(model: Classifier) -> Graph:
    """Accept either a Graph or a trained model wrapping one."""
    graph = getattr(model, "graph", model)
    if not isinstance(graph, Graph):
        raise TypeError(f"expected a Graph or a model with .graph, got {type(model).__name__}")
    return graph


def forward(model: Classifier, x: npt.ArrayLike) -> Tensor:
    """
    Evaluate logits Z(x); no softmax is applied.

    A single sample returns a 1-D logit vector, a batch returns (N, k).
    """
    graph = as_graph(model)
    batch, single = graph.as_batch(x)
    _, _, out = graph.build(batch)
    return out.data[0] if single else out.data


def value_and_input_grad(
    model: Classifier,
    batch: npt.ArrayLike,
    objective: Callable[[Variable], Variable],
) -> tuple[Tensor, Tensor, Tensor]:
    """
    Differentiate a scalar objective of the logits with respect to the input.

    Args:
        model: Graph or trained model
        batch: Input batch (N, *input_shape)
        objective: Maps the (N, k) logit node to a scalar node

    Returns:
        Tuple of (objective value, logits, gradient shaped like batch)
    """
    graph = as_graph(model)
    data, _ = graph.as_batch(batch)
    x, _, logits = graph.build(data)
    value = objective(logits)
    value.backward()
    grad = x.grad if x.grad is not None else np.zeros_like(data)
    return value.data, logits.data, grad


def batch_input_gradient(
    model: Classifier, batch: npt.ArrayLike, targets: Sequence[int] | np.ndarray
) -> Tensor:
    """Per-sample gradients of Z[i, targets[i]] with respect to batch[i]."""
    graph = as_graph(model)
    data, _ = graph.as_batch(batch)
    targets = np.asarray(targets, dtype=np.int64)
    k = graph.class_count
    if np.any(targets < 0) or np.any(targets >= k):
        raise IndexError(f"target index out of range [0, {k})")
    _, _, grad = value_and_input_grad(graph, data, lambda z: T.reduce_sum(T.pick(z, targets)))
    return grad


def input_gradient(model: Classifier, x: npt.ArrayLike, target_index: int) -> Tensor:
    """Return dZ_target/dx with the same shape as a single input ``x``."""
    graph = as_graph(model)
    batch, single = graph.as_batch(x)
    if not single:
        raise ShapeError("input_gradient takes a single sample; use batch_input_gradient")
    return batch_input_gradient(graph, batch, [target_index])[0]


def loss_gradients(
    model: Classifier,
    batch: npt.ArrayLike,
    labels: Sequence[int] | np.ndarray,
    loss: str = "cross-entropy",
) -> tuple[float, dict[str, Tensor]]:
    """
    Mean loss over the batch and its gradient for every parameter leaf.

    Raises:
        ShapeError: If the batch and label counts differ
        IndexError: If a label lies outside the class range
        ValueError: For an unsupported loss
    """
    if loss not in ("cross-entropy", "cross_entropy"):
        raise ValueError(f"unsupported loss {loss!r}")
    graph = as_graph(model)
    data, _ = graph.as_batch(batch)
    labels = np.asarray(labels, dtype=np.int64)
    if data.shape[0] != labels.shape[0]:
        raise ShapeError(f"batch has {data.shape[0]} samples but {labels.shape[0]} labels")
    k = graph.class_count
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexError(f"label out of class range [0, {k})")
    _, params, logits = graph.build(data, track_parameters=True)
    value = T.reduce_mean(T.cross_entropy(logits, labels))
    value.backward()
    grads = {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data))
        for name, leaf in params.items()
    }
    return float(value.data), grads


def input_loss_gradient(
    model: Classifier, batch: npt.ArrayLike, labels: Sequence[int] | np.ndarray
) -> tuple[Tensor, Tensor]:
    """Per-sample cross-entropy and the gradient of each sample's own loss w.r.t. its input."""
    labels = np.asarray(labels, dtype=np.int64)
    holder: dict[str, Tensor] = {}

    def objective(z: Variable) -> Variable:
        losses = T.cross_entropy(z, labels)
        holder["losses"] = losses.data
        return T.reduce_sum(losses)

    _, _, grad = value_and_input_grad(model, batch, objective)
    return holder["losses"], grad
