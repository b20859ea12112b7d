"""Leave-one-out attribution."""

import numpy as np
import numpy.typing as npt

from ..diffcore import Classifier, as_graph, as_tensor, forward
from .integrated import AttributionMap


def leave_one_out(
    model: Classifier,
    x: npt.ArrayLike,
    target: int,
    baseline_value: float = 0.0,
    chunk: int = 512,
) -> AttributionMap:
    """
    scores_i = Z_target(x) - Z_target(x with feature i set to ``baseline_value``).
    """
    graph = as_graph(model)
    x = as_tensor(x)
    reference = forward(graph, x)[target]
    flat = x.ravel()
    scores = np.empty(flat.size)
    for start in range(0, flat.size, chunk):
        index = np.arange(start, min(start + chunk, flat.size))
        occluded = np.repeat(flat[None, :], len(index), axis=0)
        occluded[np.arange(len(index)), index] = baseline_value
        logits = forward(graph, occluded.reshape(len(index), *x.shape))
        scores[index] = reference - logits[:, target]
    return AttributionMap(
        scores=scores.reshape(x.shape),
        target_class=int(target),
        baseline_id=f"constant:{baseline_value:g}",
        steps=0,
    )
