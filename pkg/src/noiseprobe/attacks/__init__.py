"""Untargeted L-infinity evasion attacks."""

from .adaptive import (
    AdaptiveCombined,
    AdaptiveIG,
    AdaptiveLogit,
    adaptive_combined,
    adaptive_ig,
    adaptive_logit,
)
from .base import ATTACK_KINDS, AdversarialBatch, AttackConfig, BaseAttack
from .cw import CarliniWagnerLinf, cw_linf
from .gradient import BIM, FGSM, PGD, bim, fgsm, pgd, project_linf

ATTACK_CLASSES: dict[str, type[BaseAttack]] = {
    "fgsm": FGSM,
    "bim": BIM,
    "pgd": PGD,
    "cw": CarliniWagnerLinf,
    "adaptive_ig": AdaptiveIG,
    "adaptive_logit": AdaptiveLogit,
    "adaptive_combined": AdaptiveCombined,
}


def build_attack(config: AttackConfig) -> BaseAttack:
    """Instantiate and validate the attack class for ``config.kind``."""
    config.validate()
    attack = ATTACK_CLASSES[config.kind](config)
    attack.validate_config()
    return attack


__all__ = [
    "ATTACK_CLASSES",
    "ATTACK_KINDS",
    "BIM",
    "FGSM",
    "PGD",
    "AdaptiveCombined",
    "AdaptiveIG",
    "AdaptiveLogit",
    "AdversarialBatch",
    "AttackConfig",
    "BaseAttack",
    "CarliniWagnerLinf",
    "adaptive_combined",
    "adaptive_ig",
    "adaptive_logit",
    "bim",
    "build_attack",
    "cw_linf",
    "fgsm",
    "pgd",
    "project_linf",
]
