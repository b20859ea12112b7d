"""Feature attribution: Integrated Gradients and leave-one-out."""

from .integrated import (
    DEFAULT_STEPS,
    AttributionMap,
    completeness_gap,
    ig_batch,
    ig_closed_form,
    ig_numeric,
    midpoints,
    path_gradients,
)
from .occlusion import leave_one_out

__all__ = [
    "DEFAULT_STEPS",
    "AttributionMap",
    "completeness_gap",
    "ig_batch",
    "ig_closed_form",
    "ig_numeric",
    "leave_one_out",
    "midpoints",
    "path_gradients",
]
