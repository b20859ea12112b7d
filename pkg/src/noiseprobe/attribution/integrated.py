"""Integrated Gradients: path-integral quadrature and the single-layer closed form."""

import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.special import expit

from ..diffcore import Classifier, Tensor, as_graph, as_tensor, batch_input_gradient, forward
from ..errors import NonFiniteError, ShapeError, SingularityError

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 64
DEFAULT_CHUNK = 256
SINGULAR_TOLERANCE = 1e-12

ACTIVATIONS: dict[str, Callable[[npt.ArrayLike], npt.ArrayLike]] = {
    "identity": lambda z: z,
    "sigmoid": expit,
}


@dataclass
class AttributionMap:
    """Per-feature relevance of one sample toward one target class."""

    scores: Tensor
    target_class: int
    baseline_id: str = "zeros"
    steps: int = 0

    def __post_init__(self) -> None:
        self.scores = as_tensor(self.scores)
        if not np.all(np.isfinite(self.scores)):
            raise NonFiniteError("attribution scores contain non-finite values")
        if self.target_class < 0:
            raise IndexError(f"target class {self.target_class} is negative")

    @property
    def total(self) -> float:
        return float(self.scores.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"feature": np.arange(self.scores.size), "score": self.scores.ravel()}
        )

    def export_csv(self, path: Path | str) -> Path:
        """Write (feature index, score) rows for inspection."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def _baseline_for(x: Tensor, baseline: npt.ArrayLike | None) -> tuple[Tensor, str]:
    if baseline is None:
        return np.zeros_like(x), "zeros"
    u = as_tensor(baseline)
    if u.shape != x.shape:
        raise ShapeError(f"baseline shape {u.shape} does not match input shape {x.shape}")
    return u, "custom"


def midpoints(m: int) -> Tensor:
    """Path positions (j - 0.5) / m for j = 1..m."""
    if m < 1:
        raise ValueError(f"step count must be at least 1, got {m}")
    return (np.arange(m, dtype=np.float64) + 0.5) / m


def path_gradients(
    model: Classifier,
    xs: npt.ArrayLike,
    targets: npt.ArrayLike,
    m: int = DEFAULT_STEPS,
    baseline: npt.ArrayLike | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> Tensor:
    """
    Average target-logit gradient along each straight path from baseline to sample.

    Args:
        model: Graph or trained model
        xs: Batch of samples (N, *input_shape)
        targets: Target class per sample
        m: Number of midpoint quadrature nodes
        baseline: Baseline shaped like one sample; zeros when omitted
        chunk: Upper bound on path points evaluated per backward pass

    Returns:
        Array shaped like ``xs``
    """
    graph = as_graph(model)
    batch, _ = graph.as_batch(xs)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.shape[0] != batch.shape[0]:
        raise ShapeError(f"{batch.shape[0]} samples but {targets.shape[0]} targets")
    u, _ = _baseline_for(batch[0], baseline)
    alphas = midpoints(m)
    shape = batch.shape[1:]
    extra_axes = (1,) * len(shape)
    group = max(1, chunk // m)

    averaged = np.empty_like(batch)
    for start in range(0, batch.shape[0], group):
        x = batch[start : start + group]
        n = x.shape[0]
        points = u + alphas.reshape(1, m, *extra_axes) * (x - u)[:, None, ...]
        grads = batch_input_gradient(
            graph,
            points.reshape(n * m, *shape),
            np.repeat(targets[start : start + group], m),
        )
        averaged[start : start + n] = grads.reshape(n, m, *shape).mean(axis=1)
    return averaged


def ig_batch(
    model: Classifier,
    xs: npt.ArrayLike,
    targets: npt.ArrayLike,
    m: int = DEFAULT_STEPS,
    baseline: npt.ArrayLike | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> Tensor:
    """Integrated Gradients score arrays for a batch, shaped like ``xs``."""
    graph = as_graph(model)
    batch, _ = graph.as_batch(xs)
    u, _ = _baseline_for(batch[0], baseline)
    return (batch - u) * path_gradients(graph, batch, targets, m, u, chunk)


def ig_numeric(
    model: Classifier,
    x: npt.ArrayLike,
    u: npt.ArrayLike | None,
    target: int,
    m: int = DEFAULT_STEPS,
) -> AttributionMap:
    """
    Integrated Gradients of one sample by the midpoint Riemann rule.

    scores_i = (x_i - u_i) * mean_j dZ_target/dx_i at u + ((j - 0.5) / m)(x - u)

    Raises:
        ShapeError: If x and u differ in shape or x does not fit the model
        ValueError: If m < 1
        IndexError: If target is outside the class range
    """
    graph = as_graph(model)
    x = as_tensor(x)
    baseline, baseline_id = _baseline_for(x, u)
    midpoints(m)
    if x.shape != graph.input_shape:
        raise ShapeError(f"input shape {x.shape} does not match graph input {graph.input_shape}")
    scores = ig_batch(graph, x[None, ...], [target], m, baseline)[0]
    return AttributionMap(scores=scores, target_class=int(target), baseline_id=baseline_id, steps=m)


def ig_closed_form(
    w: npt.ArrayLike,
    activation: str | Callable[[npt.ArrayLike], npt.ArrayLike],
    x: npt.ArrayLike,
    u: npt.ArrayLike | None = None,
    bias: float = 0.0,
) -> AttributionMap:
    """
    Exact Integrated Gradients for a single-layer model F(v) = H(<w, v> + b).

    Along the straight path the pre-activation is linear in the path
    variable, so the integral collapses to
    [F(x) - F(u)] * ((x - u) * w) / <x - u, w>.

    Raises:
        SingularityError: If |<x - u, w>| < 1e-12
    """
    w = as_tensor(w)
    x = as_tensor(x)
    baseline, baseline_id = _baseline_for(x, u)
    if w.shape != x.shape:
        raise ShapeError(f"weight shape {w.shape} does not match input shape {x.shape}")
    h = ACTIVATIONS[activation] if isinstance(activation, str) else activation

    diff = x - baseline
    denominator = float(np.sum(diff * w))
    if abs(denominator) < SINGULAR_TOLERANCE:
        raise SingularityError(
            f"<x - u, w> = {denominator:.3g} is too close to zero for the closed form"
        )
    f_x = float(h(np.sum(w * x) + bias))
    f_u = float(h(np.sum(w * baseline) + bias))
    scores = (f_x - f_u) * diff * w / denominator
    return AttributionMap(scores=scores, target_class=0, baseline_id=baseline_id, steps=0)


def completeness_gap(
    model: Classifier, attribution: AttributionMap, x: npt.ArrayLike, u: npt.ArrayLike | None = None
) -> float:
    """|sum of scores - (Z_target(x) - Z_target(u))|."""
    x = as_tensor(x)
    baseline, _ = _baseline_for(x, u)
    t = attribution.target_class
    delta = float(forward(model, x)[t] - forward(model, baseline)[t])
    gap = abs(attribution.total - delta)
    logger.debug("completeness gap %.3g for output change %.3g", gap, delta)
    return gap
