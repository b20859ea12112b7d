"""Tests for the differentiation core."""

import numpy as np
import pytest
from scipy.special import logsumexp, softmax as reference_softmax

from noiseprobe.diffcore import (
    Affine,
    Graph,
    Variable,
    batch_input_gradient,
    forward,
    input_gradient,
    input_loss_gradient,
    loss_gradients,
    softmax,
)
from noiseprobe.diffcore import tensor as T
from noiseprobe.errors import ShapeError


def numeric_input_gradient(graph, x, target, h=1e-5):
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (forward(graph, up)[target] - forward(graph, down)[target]) / (2 * h)
    return grad


def numeric_loss_gradient(graph, batch, labels, name, h=1e-5):
    value = graph.parameters[name]
    grad = np.zeros_like(value)
    for i in np.ndindex(value.shape):
        original = value[i]
        value[i] = original + h
        up, _ = loss_gradients(graph, batch, labels)
        value[i] = original - h
        down, _ = loss_gradients(graph, batch, labels)
        value[i] = original
        grad[i] = (up - down) / (2 * h)
    return grad


def numeric_primitive_gradients(op, arrays, weights, h=1e-5):
    """Central differences of sum(op(*arrays) * weights) for every input array."""

    def value(inputs):
        out = op(*[Variable(a, requires_grad=False) for a in inputs])
        return float(np.sum(out.data * weights))

    grads = []
    for k, array in enumerate(arrays):
        grad = np.zeros_like(array)
        for i in np.ndindex(array.shape):
            up = [a.copy() for a in arrays]
            down = [a.copy() for a in arrays]
            up[k][i] += h
            down[k][i] -= h
            grad[i] = (value(up) - value(down)) / (2 * h)
        grads.append(grad)
    return grads


PRIMITIVES = {
    "add": (T.add, [(3, 4), (4,)]),
    "mul": (T.mul, [(3, 4), (3, 4)]),
    "neg": (T.neg, [(3, 4)]),
    "relu": (T.relu, [(3, 4)]),
    "sigmoid": (T.sigmoid, [(3, 4)]),
    "square": (T.square, [(3, 4)]),
    "sum": (lambda a: T.reduce_sum(a, 1), [(3, 4)]),
    "mean": (lambda a: T.reduce_mean(a, 0), [(3, 4)]),
    "pick": (lambda a: T.pick(a, [0, 3, 1]), [(3, 4)]),
    "reshape": (lambda a: T.reshape(a, (6, 2)), [(3, 4)]),
    "softmax": (T.softmax_rows, [(3, 5)]),
    "log_softmax": (T.log_softmax_rows, [(3, 5)]),
    "cross_entropy": (lambda a: T.cross_entropy(a, [1, 0, 4]), [(3, 5)]),
    "affine": (T.affine, [(2, 3), (4, 3), (4,)]),
    "conv2d": (T.conv2d, [(2, 2, 5, 5), (3, 2, 3, 3), (3,)]),
    "max_pool2d": (lambda a: T.max_pool2d(a, 2), [(1, 2, 4, 5)]),
}


class TestPrimitives:
    """Every primitive's backward pass against central finite differences."""

    @pytest.mark.parametrize("name", sorted(PRIMITIVES))
    def test_matches_finite_differences(self, name):
        """Test the gradient of a random weighted sum of the primitive's output."""
        op, shapes = PRIMITIVES[name]
        rng = np.random.default_rng(0)
        arrays = [rng.uniform(-1, 1, size=shape) for shape in shapes]
        leaves = [Variable(a) for a in arrays]
        out = op(*leaves)
        weights = rng.normal(size=out.shape)
        out.backward(weights)
        numeric = numeric_primitive_gradients(op, arrays, weights)
        for leaf, expected in zip(leaves, numeric):
            assert np.max(np.abs(leaf.grad - expected)) < 1e-4


class TestForward:
    """Tests for logit evaluation."""

    def test_single_sample_returns_vector(self, mlp_graph):
        """Test that a single sample yields a 1-D logit vector."""
        logits = forward(mlp_graph, np.zeros(6))
        assert logits.shape == (3,)

    def test_batch_returns_matrix(self, mlp_graph):
        """Test that a batch yields one row per sample."""
        logits = forward(mlp_graph, np.zeros((5, 6)))
        assert logits.shape == (5, 3)

    def test_batch_rows_match_single_calls(self, cnn_graph):
        """Test that batching does not change per-sample logits."""
        xs = np.random.default_rng(0).uniform(size=(4, 1, 6, 6))
        batched = forward(cnn_graph, xs)
        for i in range(4):
            np.testing.assert_allclose(batched[i], forward(cnn_graph, xs[i]), atol=1e-12)

    def test_shape_mismatch_raises(self, mlp_graph):
        """Test that a wrongly shaped input raises ShapeError."""
        with pytest.raises(ShapeError):
            forward(mlp_graph, np.zeros(7))

    def test_missing_parameter_raises(self, mlp_graph):
        """Test that a graph missing a parameter cannot be built."""
        parameters = dict(mlp_graph.parameters)
        parameters.pop("logits.bias")
        with pytest.raises(ShapeError):
            Graph(mlp_graph.input_shape, mlp_graph.layers, parameters)


class TestGradients:
    """Reverse-mode gradients against central finite differences."""

    @pytest.mark.parametrize("seed", range(10))
    def test_mlp_input_gradient(self, mlp_graph, seed):
        """Test input gradients of an MLP."""
        x = np.random.default_rng(seed).uniform(-1, 1, size=6)
        for target in range(3):
            analytic = input_gradient(mlp_graph, x, target)
            numeric = numeric_input_gradient(mlp_graph, x, target)
            assert np.max(np.abs(analytic - numeric)) < 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_cnn_input_gradient(self, cnn_graph, seed):
        """Test input gradients through convolution and max pooling."""
        x = np.random.default_rng(seed).uniform(0, 1, size=(1, 6, 6))
        analytic = input_gradient(cnn_graph, x, 1)
        numeric = numeric_input_gradient(cnn_graph, x, 1)
        assert np.max(np.abs(analytic - numeric)) < 1e-4

    def test_batch_gradient_uses_per_sample_targets(self, mlp_graph):
        """Test that each row gets the gradient of its own target logit."""
        xs = np.random.default_rng(3).uniform(size=(3, 6))
        targets = [0, 2, 1]
        grads = batch_input_gradient(mlp_graph, xs, targets)
        for i, t in enumerate(targets):
            np.testing.assert_allclose(grads[i], input_gradient(mlp_graph, xs[i], t), atol=1e-12)

    def test_target_out_of_range(self, mlp_graph):
        """Test that an invalid target raises IndexError."""
        with pytest.raises(IndexError):
            batch_input_gradient(mlp_graph, np.zeros((1, 6)), [3])

    @pytest.mark.parametrize("name", ["dense1.weight", "dense2.bias", "logits.weight"])
    def test_parameter_gradients(self, mlp_graph, name):
        """Test mean cross-entropy gradients for parameter leaves."""
        rng = np.random.default_rng(11)
        batch = rng.uniform(size=(4, 6))
        labels = np.array([0, 1, 2, 1])
        _, grads = loss_gradients(mlp_graph, batch, labels)
        numeric = numeric_loss_gradient(mlp_graph, batch, labels, name)
        assert np.max(np.abs(grads[name] - numeric)) < 1e-4

    def test_conv_parameter_gradients(self, cnn_graph):
        """Test convolution kernel gradients."""
        rng = np.random.default_rng(12)
        batch = rng.uniform(size=(2, 1, 6, 6))
        labels = np.array([2, 0])
        _, grads = loss_gradients(cnn_graph, batch, labels)
        numeric = numeric_loss_gradient(cnn_graph, batch, labels, "conv1.weight")
        assert np.max(np.abs(grads["conv1.weight"] - numeric)) < 1e-4

    def test_input_loss_gradient_is_per_sample(self, mlp_graph):
        """Test that each sample's gradient only involves its own loss."""
        rng = np.random.default_rng(13)
        batch = rng.uniform(size=(3, 6))
        labels = np.array([1, 0, 2])
        losses, grad = input_loss_gradient(mlp_graph, batch, labels)
        assert losses.shape == (3,)
        _, alone = input_loss_gradient(mlp_graph, batch[1:2], labels[1:2])
        np.testing.assert_allclose(grad[1], alone[0], atol=1e-12)

    def test_label_count_mismatch(self, mlp_graph):
        """Test that labels must match the batch size."""
        with pytest.raises(ShapeError):
            loss_gradients(mlp_graph, np.zeros((2, 6)), [0])

    def test_cross_entropy_by_hand(self, linear_graph):
        """Test the loss and its gradients on one sample of a 2-class affine model."""
        x = np.array([0.3, -0.2, 0.9, 0.5])
        weight = linear_graph.parameters["logits.weight"]
        bias = linear_graph.parameters["logits.bias"]
        z = weight @ x + bias
        loss, grads = loss_gradients(linear_graph, x[None, :], [1])
        assert abs(loss - (logsumexp(z) - z[1])) <= 1e-12
        residual = reference_softmax(z) - np.array([0.0, 1.0])
        np.testing.assert_allclose(grads["logits.bias"], residual, atol=1e-12)
        np.testing.assert_allclose(grads["logits.weight"], np.outer(residual, x), atol=1e-12)

    def test_single_class_is_degenerate(self):
        """Test that a 1-class model has zero loss and zero gradients."""
        graph = Graph(
            (3,),
            (Affine("logits", 1),),
            {"logits.weight": np.array([[0.4, -1.2, 2.0]]), "logits.bias": np.array([0.7])},
        )
        loss, grads = loss_gradients(graph, np.random.default_rng(2).uniform(size=(5, 3)), [0] * 5)
        assert loss == 0.0
        for grad in grads.values():
            np.testing.assert_array_equal(grad, 0.0)


class TestSoftmax:
    """Tests for the numerically stable softmax."""

    def test_rows_sum_to_one(self):
        """Test that probabilities sum to one even for large logits."""
        probs = softmax(np.array([1000.0, 1001.0, 999.0]))
        assert np.isclose(probs.sum(), 1.0)
        assert np.argmax(probs) == 1
        np.testing.assert_allclose(softmax(np.zeros(3)), 1 / 3)

    def test_rejects_matrix(self):
        """Test that only 1-D logit vectors are accepted."""
        with pytest.raises(ShapeError):
            softmax(np.zeros((2, 3)))

    def test_large_gap_is_exact(self):
        """Test that a 1000-logit gap gives [1, 0] without overflow."""
        np.testing.assert_allclose(softmax(np.array([1000.0, 0.0])), [1.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("shift", [-50.0, 3.25, 700.0])
    def test_shift_invariance(self, shift):
        """Test that adding a constant to every logit leaves the probabilities unchanged."""
        z = np.random.default_rng(4).normal(size=7)
        probs = softmax(z)
        assert abs(probs.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(softmax(z + shift), probs, rtol=0, atol=1e-12)
