"""Dense float64 tensors with reverse-mode differentiation."""

from .graph import (
    Affine,
    Classifier,
    Conv2d,
    Flatten,
    Graph,
    Layer,
    MaxPool2d,
    ReLU,
    Reshape,
    Sigmoid,
    as_graph,
    batch_input_gradient,
    forward,
    input_gradient,
    input_loss_gradient,
    layer_from_dict,
    loss_gradients,
    value_and_input_grad,
)
from .tensor import Tensor, Variable, as_tensor, check_finite, softmax

__all__ = [
    "Affine",
    "Classifier",
    "Conv2d",
    "Flatten",
    "Graph",
    "Layer",
    "MaxPool2d",
    "ReLU",
    "Reshape",
    "Sigmoid",
    "Tensor",
    "Variable",
    "as_graph",
    "as_tensor",
    "batch_input_gradient",
    "check_finite",
    "forward",
    "input_gradient",
    "input_loss_gradient",
    "layer_from_dict",
    "loss_gradients",
    "softmax",
    "value_and_input_grad",
]
