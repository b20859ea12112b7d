"""Sign-gradient attacks on the cross-entropy loss: FGSM, BIM and PGD."""

import logging
import time

import numpy as np
import numpy.typing as npt

from ..diffcore import Classifier, Tensor, as_graph, check_finite, input_loss_gradient
from ..models import predict
from ..utils import sample_rng
from .base import AdversarialBatch, AttackConfig, BaseAttack

logger = logging.getLogger(__name__)


def project_linf(
    x_adv: Tensor,
    x: Tensor,
    epsilon: float,
    clip_min: float | None = 0.0,
    clip_max: float | None = 1.0,
) -> Tensor:
    """Clip into the epsilon L-infinity ball around ``x``, then into the domain box."""
    out = np.clip(x_adv, x - epsilon, x + epsilon)
    if clip_min is not None or clip_max is not None:
        out = np.clip(out, clip_min, clip_max)
    return out


def loss_gradient(model: Classifier, x: Tensor, y: np.ndarray, chunk: int = 256) -> Tensor:
    """Per-sample gradient of the true-label cross-entropy with respect to the input."""
    grad = np.empty_like(x)
    for start in range(0, x.shape[0], chunk):
        _, grad[start : start + chunk] = input_loss_gradient(
            model, x[start : start + chunk], y[start : start + chunk]
        )
    check_finite(grad, "input gradient")
    return grad


def sign_step(
    model: Classifier, x_adv: Tensor, x: Tensor, y: np.ndarray, alpha: float, config: AttackConfig
) -> Tensor:
    """One ascent step of size ``alpha`` along sign(grad), projected. sign(0) is 0."""
    grad = loss_gradient(model, x_adv, y, config.chunk)
    return project_linf(
        x_adv + alpha * np.sign(grad), x, config.epsilon, config.clip_min, config.clip_max
    )


def random_start(x: Tensor, config: AttackConfig) -> Tensor:
    """Uniform draw in the epsilon ball, one generator per sample index."""
    if config.zero_init or config.epsilon == 0:
        return project_linf(x.copy(), x, config.epsilon, config.clip_min, config.clip_max)
    noise = np.stack(
        [
            sample_rng(config.seed, i).uniform(-config.epsilon, config.epsilon, size=x.shape[1:])
            for i in range(x.shape[0])
        ]
    )
    return project_linf(x + noise, x, config.epsilon, config.clip_min, config.clip_max)


def prepare(model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> tuple[Tensor, np.ndarray]:
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    labels = np.asarray(y, dtype=np.int64).reshape(-1)
    if labels.shape[0] != batch.shape[0]:
        raise ValueError(f"{batch.shape[0]} samples but {labels.shape[0]} labels")
    return batch, labels


def finish(
    model: Classifier, x: Tensor, x_adv: Tensor, y: np.ndarray, config: AttackConfig, started: float
) -> AdversarialBatch:
    _, adversarial_labels = predict(model, x_adv)
    batch = AdversarialBatch(
        originals=x,
        perturbed=x_adv,
        original_labels=y,
        adversarial_labels=adversarial_labels,
        config=config,
        wall_time=time.perf_counter() - started,
    )
    logger.info(
        "%s eps=%g: success rate %.3f over %d samples",
        config.kind,
        config.epsilon,
        batch.success_rate,
        len(batch),
    )
    return batch


def iterate(
    model: Classifier, x: Tensor, y: np.ndarray, start: Tensor, steps: int, config: AttackConfig
) -> Tensor:
    x_adv = start
    for _ in range(steps):
        x_adv = sign_step(model, x_adv, x, y, config.resolved_alpha, config)
    return x_adv


class FGSM(BaseAttack):
    """Single step of size epsilon along the loss-gradient sign."""

    @property
    def name(self) -> str:
        return "fgsm"

    def generate(self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> AdversarialBatch:
        self.validate_config()
        started = time.perf_counter()
        batch, labels = prepare(model, x, y)
        x_adv = sign_step(model, batch, batch, labels, self.config.epsilon, self.config)
        return finish(model, batch, x_adv, labels, self.config, started)


class BIM(BaseAttack):
    """Iterated FGSM with step alpha, projected after every step."""

    @property
    def name(self) -> str:
        return "bim"

    def generate(self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> AdversarialBatch:
        self.validate_config()
        started = time.perf_counter()
        batch, labels = prepare(model, x, y)
        x_adv = iterate(model, batch, labels, batch.copy(), self.config.resolved_steps, self.config)
        return finish(model, batch, x_adv, labels, self.config, started)


class PGD(BaseAttack):
    """BIM from a uniform random start inside the epsilon ball."""

    @property
    def name(self) -> str:
        return "pgd"

    def generate(self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> AdversarialBatch:
        self.validate_config()
        started = time.perf_counter()
        batch, labels = prepare(model, x, y)
        start = random_start(batch, self.config)
        x_adv = iterate(model, batch, labels, start, self.config.resolved_steps, self.config)
        return finish(model, batch, x_adv, labels, self.config, started)


def fgsm(model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike, epsilon: float, **options) -> AdversarialBatch:
    return FGSM(AttackConfig(kind="fgsm", epsilon=epsilon, **options)).generate(model, x, y)


def bim(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float,
    alpha: float | None = None,
    steps: int = 10,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(kind="bim", epsilon=epsilon, alpha=alpha, steps=steps, **options)
    return BIM(config).generate(model, x, y)


def pgd(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float,
    alpha: float | None = None,
    steps: int = 40,
    seed: int = 0,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(kind="pgd", epsilon=epsilon, alpha=alpha, steps=steps, seed=seed, **options)
    return PGD(config).generate(model, x, y)
