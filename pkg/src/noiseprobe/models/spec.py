"""Reference architectures and their parameter initialization."""

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..diffcore import (
    Affine,
    Conv2d,
    Flatten,
    Graph,
    Layer,
    MaxPool2d,
    ReLU,
    Reshape,
    Sigmoid,
)
from ..errors import ConfigError

ARCHITECTURES = ("mlp", "lenet", "single_layer")
ACTIVATIONS = ("identity", "sigmoid")


@dataclass
class ModelSpec:
    """
    Architecture description for a classifier.

    ``lenet`` follows the MNIST layout: two 5x5 conv+relu blocks with 2x2 max
    pooling (6 and 16 filters), then dense relu layers and a linear output.
    ``single_layer`` is one affine map followed by ``activation``.
    """

    architecture: str
    input_shape: tuple[int, ...]
    class_count: int
    hidden: tuple[int, ...] = (64, 64)
    conv_channels: tuple[int, ...] = (6, 16)
    kernel: int = 5
    dense: tuple[int, ...] = (120, 84)
    activation: str = "identity"
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.input_shape = tuple(int(d) for d in self.input_shape)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.dense = tuple(int(d) for d in self.dense)

    def validate(self) -> None:
        """Raise ConfigError if the spec cannot describe a consistent graph."""
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(
                f"model.architecture must be one of {', '.join(ARCHITECTURES)}, got {self.architecture!r}"
            )
        if self.class_count < 2:
            raise ConfigError("model.class_count must be at least 2")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"model.activation must be one of {', '.join(ACTIVATIONS)}")
        if self.architecture == "lenet" and len(self.input_shape) not in (2, 3):
            raise ConfigError("lenet needs an image input shape (H, W) or (C, H, W)")
        try:
            Graph(self.input_shape, build_layers(self), _zero_parameters(self))
        except ValueError as e:
            raise ConfigError(f"inconsistent layer shapes: {e}") from e

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key in ("input_shape", "hidden", "conv_channels", "dense"):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model fields: {', '.join(sorted(unknown))}")
        return cls(**data)


def build_layers(spec: ModelSpec) -> tuple[Layer, ...]:
    layers: list[Layer] = []
    if spec.architecture == "lenet":
        if len(spec.input_shape) == 2:
            layers.append(Reshape((1, *spec.input_shape)))
        for i, channels in enumerate(spec.conv_channels, start=1):
            layers += [
                Conv2d(f"conv{i}", channels, spec.kernel),
                ReLU(f"conv{i}_relu"),
                MaxPool2d(2, f"pool{i}"),
            ]
        layers.append(Flatten())
        for i, units in enumerate(spec.dense, start=1):
            layers += [Affine(f"dense{i}", units), ReLU(f"dense{i}_relu")]
        layers.append(Affine("logits", spec.class_count))
    elif spec.architecture == "mlp":
        layers.append(Flatten())
        for i, units in enumerate(spec.hidden, start=1):
            layers += [Affine(f"dense{i}", units), ReLU(f"dense{i}_relu")]
        layers.append(Affine("logits", spec.class_count))
    else:
        layers += [Flatten(), Affine("logits", spec.class_count)]
        if spec.activation == "sigmoid":
            layers.append(Sigmoid("output"))
    return tuple(layers)


def _zero_parameters(spec: ModelSpec) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    shape = spec.input_shape
    for layer in build_layers(spec):
        for name, pshape in layer.parameter_shapes(shape).items():
            out[name] = np.zeros(pshape)
        shape = layer.output_shape(shape)
    return out


def initialize(spec: ModelSpec, seed: int) -> Graph:
    """
    Build the graph for ``spec`` with seeded Kaiming-uniform weights.

    Layers feeding a relu use bound sqrt(6 / fan_in); the output layer uses
    sqrt(3 / fan_in). Biases start at zero.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    layers = build_layers(spec)
    parameters: dict[str, np.ndarray] = {}
    shape = spec.input_shape
    for index, layer in enumerate(layers):
        feeds_relu = index + 1 < len(layers) and isinstance(layers[index + 1], ReLU)
        for name, pshape in layer.parameter_shapes(shape).items():
            if name.endswith(".bias"):
                parameters[name] = np.zeros(pshape)
                continue
            fan_in = int(np.prod(pshape[1:]))
            bound = np.sqrt((6.0 if feeds_relu else 3.0) / fan_in)
            parameters[name] = rng.uniform(-bound, bound, size=pshape)
        shape = layer.output_shape(shape)
    return Graph(spec.input_shape, layers, parameters)
