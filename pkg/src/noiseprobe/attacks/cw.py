"""Zero-confidence Carlini-Wagner attack under an L-infinity budget."""

import time

import numpy as np
import numpy.typing as npt

from ..diffcore import Classifier, Tensor, Variable, check_finite, value_and_input_grad
from ..diffcore import tensor as T
from ..models import Adam, predict
from .base import AdversarialBatch, AttackConfig, BaseAttack
from .gradient import finish, prepare, project_linf


def margin_loss(model: Classifier, x_adv: Tensor, y: np.ndarray) -> tuple[Tensor, Tensor]:
    """
    Per-sample max(Z_y - max_{i != y} Z_i, -kappa) with kappa = 0, and its input gradient.

    The runner-up index is read off the current logits, so the gradient is
    the subgradient of the piecewise-linear margin.
    """
    holder: dict[str, Tensor] = {}

    def objective(z: Variable) -> Variable:
        masked = z.data.copy()
        masked[np.arange(len(y)), y] = -np.inf
        runner_up = masked.argmax(axis=1)
        margin = T.pick(z, y) - T.pick(z, runner_up)
        active = Variable((margin.data > 0).astype(np.float64), op="active", requires_grad=False)
        holder["loss"] = np.maximum(margin.data, 0.0)
        return T.reduce_sum(margin * active)

    _, _, grad = value_and_input_grad(model, x_adv, objective)
    check_finite(holder["loss"], "CW loss")
    return holder["loss"], grad


class CarliniWagnerLinf(BaseAttack):
    """
    Adam descent on the zero-confidence margin loss, projected into the
    epsilon ball and the domain box after every iterate.

    Returns, per sample, the misclassified iterate with the least L2
    distortion; samples that never flip keep their final iterate.
    """

    @property
    def name(self) -> str:
        return "cw"

    def generate(self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike) -> AdversarialBatch:
        self.validate_config()
        config = self.config
        started = time.perf_counter()
        batch, labels = prepare(model, x, y)
        flat = batch.reshape(len(batch), -1)

        x_adv = batch.copy()
        best = batch.copy()
        best_l2 = np.full(len(batch), np.inf)
        optimizer = Adam(config.cw_lr)

        for _ in range(config.cw_iters + 1):
            _, predicted = predict(model, x_adv)
            l2 = np.linalg.norm(x_adv.reshape(len(batch), -1) - flat, axis=1)
            improved = (predicted != labels) & (l2 < best_l2)
            best[improved] = x_adv[improved]
            best_l2[improved] = l2[improved]
            if np.all(np.isfinite(best_l2)):
                break
            _, grad = margin_loss(model, x_adv, labels)
            optimizer.tick()
            x_adv = project_linf(
                x_adv - config.cw_lr * optimizer.direction("x", grad),
                batch,
                config.epsilon,
                config.clip_min,
                config.clip_max,
            )

        failed = ~np.isfinite(best_l2)
        best[failed] = x_adv[failed]
        return finish(model, batch, best, labels, config, started)


def cw_linf(
    model: Classifier,
    x: npt.ArrayLike,
    y: npt.ArrayLike,
    epsilon: float = 0.15,
    lr: float = 0.01,
    iters: int = 400,
    **options,
) -> AdversarialBatch:
    config = AttackConfig(kind="cw", epsilon=epsilon, cw_lr=lr, cw_iters=iters, **options)
    return CarliniWagnerLinf(config).generate(model, x, y)
