"""Detector metrics and the evaluation grid."""

from .metrics import (
    auc,
    interquartile_range,
    lower_threshold,
    nearest_rank,
    rejection_count,
    tpr_at_fpr,
    upper_threshold,
)
from .grid import (  # noqa: I001
    REPORT_COLUMNS,
    EvalReport,
    EvalRow,
    correctly_classified,
    fpr_curve,
    run_grid,
    validation_pair,
)

__all__ = [
    "REPORT_COLUMNS",
    "EvalReport",
    "EvalRow",
    "auc",
    "correctly_classified",
    "fpr_curve",
    "interquartile_range",
    "lower_threshold",
    "nearest_rank",
    "rejection_count",
    "run_grid",
    "tpr_at_fpr",
    "upper_threshold",
    "validation_pair",
]
