"""Training loop, optimizers and prediction."""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from ..diffcore import Graph, Tensor, forward, loss_gradients
from ..errors import ConfigError, DivergenceError, NonFiniteError, ShapeError
from .spec import ModelSpec, initialize

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimizer and schedule settings, accepted as a plain key/value document."""

    optimizer: str = "adam"
    lr: float = 0.001
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    momentum: float = 0.9

    def validate(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(
                f"training.optimizer must be one of {', '.join(OPTIMIZERS)}, got {self.optimizer!r}"
            )
        if self.lr <= 0:
            raise ConfigError("training.lr must be positive")
        if self.epochs < 0:
            raise ConfigError("training.epochs must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size must be at least 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training fields: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass
class TrainingRecord:
    epochs: int
    seed: int
    test_accuracy: float
    loss_history: list[float] = field(default_factory=list)
    config_hash: str = ""


@dataclass
class TrainedModel:
    """A classifier graph together with the spec and training metadata that produced it."""

    spec: ModelSpec
    graph: Graph
    record: TrainingRecord

    @property
    def parameters(self) -> dict[str, Tensor]:
        return self.graph.parameters

    def metadata(self) -> dict[str, Any]:
        return asdict(self.record)


# ===== OPTIMIZERS =====


class Optimizer(ABC):
    """Stateful update rule over named parameter arrays."""

    def __init__(self, lr: float):
        self.lr = lr

    @abstractmethod
    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        """Replace each array in ``params`` with its updated value."""
        pass


class SGD(Optimizer):
    def __init__(self, lr: float, momentum: float = 0.9):
        super().__init__(lr)
        self.momentum = momentum
        self.velocity: dict[str, Tensor] = {}

    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        for name, grad in grads.items():
            v = self.momentum * self.velocity.get(name, np.zeros_like(grad)) - self.lr * grad
            self.velocity[name] = v
            params[name] = params[name] + v


class Adam(Optimizer):
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, Tensor] = {}
        self.v: dict[str, Tensor] = {}

    def direction(self, name: str, grad: Tensor) -> Tensor:
        """Bias-corrected Adam update direction for one array (call after ``tick``)."""
        m = self.beta1 * self.m.get(name, np.zeros_like(grad)) + (1 - self.beta1) * grad
        v = self.beta2 * self.v.get(name, np.zeros_like(grad)) + (1 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1 - self.beta1**self.t)
        v_hat = v / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)

    def tick(self) -> None:
        self.t += 1

    def step(self, params: dict[str, Tensor], grads: dict[str, Tensor]) -> None:
        self.tick()
        for name, grad in grads.items():
            params[name] = params[name] - self.lr * self.direction(name, grad)


OPTIMIZERS: dict[str, type[Optimizer]] = {"adam": Adam, "sgd": SGD}


def _make_optimizer(config: TrainConfig) -> Optimizer:
    if config.optimizer == "sgd":
        return SGD(config.lr, config.momentum)
    return Adam(config.lr)


# ===== PREDICTION =====


def predict(model: TrainedModel | Graph, batch: npt.ArrayLike) -> tuple[Tensor, np.ndarray]:
    """
    Logits and argmax labels for a batch; ties go to the lowest index.

    Raises:
        ShapeError: If the batch does not match the model input
    """
    logits = forward(model, batch)
    if logits.ndim == 1:
        logits = logits[None, :]
    return logits, np.argmax(logits, axis=1)


def accuracy(model: TrainedModel | Graph, features: Tensor, labels: np.ndarray, chunk: int = 1024) -> float:
    if len(labels) == 0:
        return 0.0
    correct = 0
    for start in range(0, len(labels), chunk):
        _, predicted = predict(model, features[start : start + chunk])
        correct += int(np.sum(predicted == labels[start : start + chunk]))
    return correct / len(labels)


# ===== TRAINING =====


def train(spec: ModelSpec, train_set: Any, valid_set: Any, config: TrainConfig) -> TrainedModel:
    """
    Train a classifier from scratch.

    Args:
        spec: Architecture to build
        train_set: Dataset with ``features`` and ``labels``
        valid_set: Dataset whose accuracy is recorded on the result
        config: Optimizer, schedule and seed

    Returns:
        TrainedModel with the recorded validation accuracy

    Raises:
        ShapeError: If the dataset feature shape does not match the spec
        DivergenceError: If the loss becomes non-finite
    """
    config.validate()
    features = np.asarray(train_set.features, dtype=np.float64)
    labels = np.asarray(train_set.labels, dtype=np.int64)
    if tuple(features.shape[1:]) != spec.input_shape:
        raise ShapeError(
            f"dataset feature shape {features.shape[1:]} does not match model input {spec.input_shape}"
        )

    graph = initialize(spec, config.seed)
    optimizer = _make_optimizer(config)
    rng = np.random.default_rng([config.seed, 1])
    history: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(labels))
        total, batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            index = order[start : start + config.batch_size]
            try:
                loss, grads = loss_gradients(graph, features[index], labels[index])
            except NonFiniteError as e:
                raise DivergenceError(f"epoch {epoch + 1}: {e}") from e
            if not np.isfinite(loss):
                raise DivergenceError(f"epoch {epoch + 1}: loss became {loss}")
            optimizer.step(graph.parameters, grads)
            total += loss
            batches += 1
        history.append(total / max(batches, 1))
        logger.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, history[-1])

    for name, value in graph.parameters.items():
        if not np.all(np.isfinite(value)):
            raise DivergenceError(f"parameter {name} is non-finite after training")

    valid_accuracy = accuracy(
        graph,
        np.asarray(valid_set.features, dtype=np.float64),
        np.asarray(valid_set.labels, dtype=np.int64),
    )
    record = TrainingRecord(
        epochs=config.epochs,
        seed=config.seed,
        test_accuracy=valid_accuracy,
        loss_history=history,
    )
    return TrainedModel(spec=spec, graph=graph, record=record)
