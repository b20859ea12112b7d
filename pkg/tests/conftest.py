"""Shared fixtures: small datasets and models that train in well under a second."""

import os
from pathlib import Path

import numpy as np
import pytest

from noiseprobe.data import split, synth_blobs, synth_digits
from noiseprobe.diffcore import Affine, Conv2d, Flatten, Graph, MaxPool2d, ReLU, Sigmoid
from noiseprobe.models import ModelSpec, TrainConfig, initialize, train


def random_graph(layers, input_shape, seed=0, scale=0.5):
    """Graph with normally distributed parameters (no training)."""
    rng = np.random.default_rng(seed)
    shapes = {}
    shape = tuple(input_shape)
    for layer in layers:
        shapes.update(layer.parameter_shapes(shape))
        shape = layer.output_shape(shape)
    parameters = {name: rng.normal(0.0, scale, size=s) for name, s in shapes.items()}
    return Graph(tuple(input_shape), tuple(layers), parameters)


@pytest.fixture
def mlp_graph():
    """Untrained 6-16-16-3 relu network."""
    return random_graph(
        (Affine("dense1", 16), ReLU("r1"), Affine("dense2", 16), ReLU("r2"), Affine("logits", 3)),
        (6,),
        seed=1,
    )


@pytest.fixture
def smooth_graph():
    """Untrained 5-8-3 network with a sigmoid hidden layer (smooth everywhere)."""
    return random_graph(
        (Affine("dense1", 8), Sigmoid("s1"), Affine("logits", 3)),
        (5,),
        seed=2,
    )


@pytest.fixture
def cnn_graph():
    """Untrained conv -> relu -> pool -> dense network on 1x6x6 images."""
    return random_graph(
        (
            Conv2d("conv1", 2, 3),
            ReLU("c1"),
            MaxPool2d(2, "pool1"),
            Flatten(),
            Affine("logits", 3),
        ),
        (1, 6, 6),
        seed=3,
    )


@pytest.fixture
def linear_graph():
    """Single affine layer, 4 inputs, 2 classes."""
    return random_graph((Affine("logits", 2),), (4,), seed=4, scale=1.0)


@pytest.fixture(scope="session")
def blobs():
    """Well separated two-class blobs in [0, 1]^4."""
    return synth_blobs(classes=2, dims=4, n=1600, separation=6.0, seed=5)


@pytest.fixture(scope="session")
def blob_splits(blobs):
    return split(blobs, [0.4, 0.3, 0.15, 0.15], seed=6)


@pytest.fixture(scope="session")
def blob_model(blob_splits):
    """Small MLP trained on the blobs."""
    spec = ModelSpec(architecture="mlp", input_shape=(4,), class_count=2, hidden=(16,))
    config = TrainConfig(optimizer="adam", lr=0.01, epochs=15, batch_size=32, seed=7)
    return train(spec, blob_splits.train, blob_splits.test, config)


@pytest.fixture(scope="session")
def digits():
    return synth_digits(n=240, seed=8)


@pytest.fixture(scope="session")
def digit_model(digits):
    """Tiny LeNet-style network on the 8x8 stroke images."""
    spec = ModelSpec(
        architecture="lenet",
        input_shape=(8, 8),
        class_count=4,
        conv_channels=(2,),
        kernel=3,
        dense=(8,),
    )
    config = TrainConfig(optimizer="adam", lr=0.01, epochs=5, batch_size=16, seed=9)
    return train(spec, digits, digits, config)


@pytest.fixture
def untrained_digit_graph():
    spec = ModelSpec(architecture="lenet", input_shape=(8, 8), class_count=4, conv_channels=(2,), kernel=3, dense=(8,))
    return initialize(spec, seed=10)


@pytest.fixture(scope="session")
def mnist_dir():
    """Directory with the four MNIST IDX files, or skip."""
    location = os.environ.get("NOISEPROBE_MNIST_DIR")
    if not location or not Path(location).is_dir():
        pytest.skip("NOISEPROBE_MNIST_DIR not set")
    return Path(location)
