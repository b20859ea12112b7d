"""Attacks that also target the detector's logit and attribution statistics.

All three start like PGD (random start, then ``warm_start_steps`` plain PGD
steps) and continue with signed steps on a joint objective:

    adaptive_ig:        -CE(y) + c * ||IG(x*) - IG(x)||_2
    adaptive_logit:     -CE(y) + mean_j (Z(x*)_j - Z(x)_j)^2
    adaptive_combined:  -CE(y) + c * ||IG(x*) - IG(x)||_2 + mean_j (Z(x*)_j - Z(x)_j)^2

With c = 0 the attribution term is skipped, so adaptive_ig reduces to PGD
and adaptive_combined to adaptive_logit step for step.
"""

import logging
import time

import numpy as np
import numpy.typing as npt

from ..attribution import path_gradients
from ..diffcore import Classifier, Tensor, Variable, check_finite, forward, value_and_input_grad
from ..diffcore import tensor as T
from .base import AdversarialBatch, AttackConfig, BaseAttack
from .gradient import finish, iterate, loss_gradient, prepare, project_linf, random_start

logger = logging.getLogger(__name__)


def logit_matching_gradient(model: Classifier, x_adv: Tensor, clean_logits: Tensor) -> Tensor:
    """Input gradient of mean_j (Z(x*)_j - Z(x)_j)^2 for every sample."""
    reference = Variable(clean_logits, op="clean_logits", requires_grad=False)

    def objective(z: Variable) -> Variable:
        return T.reduce_sum(T.reduce_mean(T.square(z - reference), axis=1))

    _, _, grad = value_and_input_grad(model, x_adv, objective)
    return grad


def attribution_distance_gradient(
    model: Classifier, x_adv: Tensor, clean_attribution: Tensor, m: int, chunk: int
) -> Tensor:
    """
    Input gradient of ||IG(x*) - IG(x)||_2 per sample, baseline zero.

    IG(x*) = x* * A(x*) with A the path-averaged gradient. A is held fixed
    when differentiating; for piecewise-linear networks it is locally
    constant, so the result is exact wherever the gradient exists.
    """
    _, targets = _predicted(model, x_adv)
    averaged = path_gradients(model, x_adv, targets, m, chunk=chunk)
    diff = x_adv * averaged - clean_attribution
    norms = np.linalg.norm(diff.reshape(len(diff), -1), axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = diff / safe.reshape(-1, *([1] * (diff.ndim - 1)))
    unit[norms == 0] = 0.0
    return unit * averaged


def _predicted(model: Classifier, batch: Tensor) -> tuple[Tensor, np.ndarray]:
    logits = forward(model, batch)
    return logits, np.argmax(logits, axis=1)


def run_adaptive(
    model: Classifier,
    x: Tensor,
    y: np.ndarray,
    config: AttackConfig,
    attribution_term: bool,
    logit_term: bool,
) -> Tensor:
    """Warm start with PGD, then signed ascent on the joint objective."""
    x_adv = random_start(x, config)
    x_adv = iterate(model, x, y, x_adv, config.warm_start_steps, config)

    use_attribution = attribution_term and config.c > 0
    clean_logits, clean_targets = _predicted(model, x)
    clean_attribution = None
    if use_attribution:
        clean_attribution = x * path_gradients(
            model, x, clean_targets, config.ig_steps, chunk=config.chunk
        )

    for step in range(config.resolved_steps):
        ascent = loss_gradient(model, x_adv, y, config.chunk)
        if logit_term:
            ascent = ascent - logit_matching_gradient(model, x_adv, clean_logits)
        if use_attribution:
            ascent = ascent - config.c * attribution_distance_gradient(
                model, x_adv, clean_attribution, config.ig_steps, config.chunk
            )
        check_finite(ascent, f"{config.kind} objective gradient")
        x_adv = project_linf(
            x_adv + config.resolved_alpha * np.sign(ascent),
            x,
            config.epsilon,
            config.clip_min,
            config.clip_max,
        )
        if (step + 1) % 50 == 0:
            logger.debug("%s step %d/%d", config.kind, step + 1, config.resolved_steps)
    return x_adv


class _AdaptiveAttack(BaseAttack):
    attribution_term = False
    logit_term = False

    def generate(self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> AdversarialBatch:
        self.validate_config()
        started = time.perf_counter()
        batch, labels = prepare(model, x, y)
        x_adv = run_adaptive(
            model, batch, labels, self.config, self.attribution_term, self.logit_term
        )
        return finish(model, batch, x_adv, labels, self.config, started)


class AdaptiveIG(_AdaptiveAttack):
    """Keeps the attribution map of the adversarial sample close to the clean one."""

    attribution_term = True

    @property
    def name(self) -> str:
        return "adaptive_ig"


class AdaptiveLogit(_AdaptiveAttack):
    """Keeps the logits of the adversarial sample close to the clean ones."""

    logit_term = True

    @property
    def name(self) -> str:
        return "adaptive_logit"


class AdaptiveCombined(_AdaptiveAttack):
    attribution_term = True
    logit_term = True

    @property
    def name(self) -> str:
        return "adaptive_combined"


def adaptive_ig(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float,
    c: float,
    steps: int,
    warm_start_steps: int = 0,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(
        kind="adaptive_ig", epsilon=epsilon, c=c, steps=steps, warm_start_steps=warm_start_steps, **options
    )
    return AdaptiveIG(config).generate(model, x, y)


def adaptive_logit(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float,
    steps: int,
    warm_start_steps: int = 0,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(
        kind="adaptive_logit", epsilon=epsilon, steps=steps, warm_start_steps=warm_start_steps, **options
    )
    return AdaptiveLogit(config).generate(model, x, y)


def adaptive_combined(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float,
    c: float,
    steps: int,
    warm_start_steps: int = 0,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(
        kind="adaptive_combined",
        epsilon=epsilon,
        c=c,
        steps=steps,
        warm_start_steps=warm_start_steps,
        **options,
    )
    return AdaptiveCombined(config).generate(model, x, y)
