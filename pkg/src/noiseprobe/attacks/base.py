"""Attack configuration, result container and the base attack interface."""

import json
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from ..diffcore import Classifier, Tensor
from ..errors import ConfigError, FormatError, ShapeError

ATTACK_KINDS = (
    "fgsm",
    "bim",
    "pgd",
    "cw",
    "adaptive_ig",
    "adaptive_logit",
    "adaptive_combined",
)

DEFAULT_STEPS = {
    "fgsm": 1,
    "bim": 10,
    "pgd": 40,
    "cw": 400,
    "adaptive_ig": 100,
    "adaptive_logit": 100,
    "adaptive_combined": 100,
}


@dataclass
class AttackConfig:
    """
    Settings for one attack run.

    ``alpha`` and ``steps`` default per kind (alpha = epsilon / 10; steps 10
    for BIM, 40 for PGD, 100 for the adaptive attacks). ``clip_min`` and
    ``clip_max`` bound the input domain; set both to None for unbounded
    feature spaces.
    """

    kind: str
    epsilon: float
    alpha: float | None = None
    steps: int | None = None
    seed: int = 0
    cw_lr: float = 0.01
    cw_iters: int = 400
    c: float = 10.0
    warm_start_steps: int = 0
    clip_min: float | None = 0.0
    clip_max: float | None = 1.0
    zero_init: bool = False
    ig_steps: int = 16
    chunk: int = 256

    def validate(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(
                f"unknown attack kind {self.kind!r}; valid kinds: {', '.join(ATTACK_KINDS)}"
            )
        if self.epsilon < 0:
            raise ConfigError("attack.epsilon must be non-negative")
        if self.resolved_steps < 1:
            raise ConfigError("attack.steps must be at least 1")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("attack.alpha must be non-negative")
        if self.resolved_alpha > self.epsilon + 1e-12:
            raise ConfigError(
                f"attack.alpha {self.resolved_alpha:g} exceeds epsilon {self.epsilon:g}"
            )
        if self.c < 0:
            raise ConfigError("attack.c must be non-negative")
        if self.warm_start_steps < 0:
            raise ConfigError("attack.warm_start_steps must be non-negative")
        if self.cw_iters < 1 or self.cw_lr <= 0:
            raise ConfigError("attack.cw_iters must be at least 1 and attack.cw_lr positive")
        if self.ig_steps < 1:
            raise ConfigError("attack.ig_steps must be at least 1")
        if (
            self.clip_min is not None
            and self.clip_max is not None
            and self.clip_min > self.clip_max
        ):
            raise ConfigError("attack.clip_min must not exceed attack.clip_max")

    @property
    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        if self.kind == "fgsm":
            return float(self.epsilon)
        return float(self.epsilon) / 10.0

    @property
    def resolved_steps(self) -> int:
        if self.kind == "cw":
            return int(self.cw_iters)
        return int(self.steps if self.steps is not None else DEFAULT_STEPS[self.kind])

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttackConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown attack fields: {', '.join(sorted(unknown))}")
        if "kind" not in data or "epsilon" not in data:
            raise ConfigError("attack entries need both kind and epsilon")
        return cls(**data)


@dataclass
class AdversarialBatch:
    """Originals, their perturbed counterparts and the labels predicted for them."""

    originals: Tensor
    perturbed: Tensor
    original_labels: np.ndarray
    adversarial_labels: np.ndarray
    config: AttackConfig
    wall_time: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.originals = np.asarray(self.originals, dtype=np.float64)
        self.perturbed = np.asarray(self.perturbed, dtype=np.float64)
        self.original_labels = np.asarray(self.original_labels, dtype=np.int64)
        self.adversarial_labels = np.asarray(self.adversarial_labels, dtype=np.int64)
        if self.originals.shape != self.perturbed.shape:
            raise ShapeError(
                f"perturbed shape {self.perturbed.shape} differs from originals {self.originals.shape}"
            )

    def __len__(self) -> int:
        return int(self.originals.shape[0])

    @property
    def success_mask(self) -> np.ndarray:
        return self.adversarial_labels != self.original_labels

    @property
    def success_rate(self) -> float:
        return float(self.success_mask.mean()) if len(self) else 0.0

    def _distortion(self, ord: float) -> np.ndarray:
        diff = (self.perturbed - self.originals).reshape(len(self), -1)
        return np.linalg.norm(diff, ord=ord, axis=1)

    @property
    def mean_l2(self) -> float:
        """Mean L2 distortion over successful samples (0 when none succeeded)."""
        mask = self.success_mask
        return float(self._distortion(2)[mask].mean()) if mask.any() else 0.0

    @property
    def max_linf(self) -> float:
        return float(self._distortion(np.inf).max()) if len(self) else 0.0

    def successful(self) -> Tensor:
        return self.perturbed[self.success_mask]

    def summary(self) -> dict[str, Any]:
        mask = self.success_mask
        return {
            "kind": self.config.kind,
            "epsilon": self.config.epsilon,
            "samples": len(self),
            "successes": int(mask.sum()),
            "success_rate": self.success_rate,
            "mean_l2": self.mean_l2,
            "mean_linf": float(self._distortion(np.inf)[mask].mean()) if mask.any() else 0.0,
            "wall_time": self.wall_time,
            "wall_time_per_sample": self.wall_time / len(self) if len(self) else 0.0,
        }

    def save(self, path: Path | str) -> Path:
        """Write an ``.npz`` container with the arrays and a JSON config echo."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"config": self.config.to_dict(), "wall_time": self.wall_time, **self.extra}
        with path.open("wb") as handle:
            np.savez(
                handle,
                originals=self.originals,
                perturbed=self.perturbed,
                original_labels=self.original_labels,
                adversarial_labels=self.adversarial_labels,
                meta=np.array(json.dumps(meta, sort_keys=True)),
            )
        return path

    @classmethod
    def load(cls, path: Path | str) -> "AdversarialBatch":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Adversarial batch not found: {path}")
        try:
            with np.load(path, allow_pickle=False) as archive:
                meta = json.loads(str(archive["meta"]))
                arrays = {
                    key: archive[key]
                    for key in ("originals", "perturbed", "original_labels", "adversarial_labels")
                }
        except (KeyError, ValueError, OSError) as e:
            raise FormatError(f"{path}: not a valid adversarial batch container: {e}") from e
        config = AttackConfig.from_dict(meta.pop("config"))
        wall_time = float(meta.pop("wall_time", 0.0))
        return cls(config=config, wall_time=wall_time, extra=meta, **arrays)


class BaseAttack(ABC):
    """Abstract base class for all attacks."""

    def __init__(self, config: AttackConfig):
        """
        Initialize the attack.

        Args:
            config: Attack settings; ``kind`` must match the attack
        """
        self.config = config

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the attack kind this class implements."""
        pass

    def validate_config(self) -> bool:
        """
        Validate the attack configuration.

        Returns:
            True if configuration is valid, raises ConfigError otherwise
        """
        if self.config.kind != self.name:
            raise ConfigError(f"{type(self).__name__} cannot run attack kind {self.config.kind!r}")
        self.config.validate()
        return True

    @abstractmethod
    def generate(
        self, model: Classifier, x: npt.ArrayLike, y: npt.ArrayLike
    ) -> AdversarialBatch:
        """
        Craft adversarial counterparts of ``x``.

        Args:
            model: Graph or trained model under attack
            x: Clean batch (N, *input_shape)
            y: True labels

        Returns:
            AdversarialBatch with success measured against ``y``
        """
        pass
