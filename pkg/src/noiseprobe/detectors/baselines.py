"""Reference detectors: softmax change under noise, attribution spread, feature squeezing."""

import numpy as np
import numpy.typing as npt
from scipy.ndimage import median_filter

from ..attribution import DEFAULT_STEPS, ig_batch, leave_one_out
from ..diffcore import Classifier, Tensor, Variable, as_graph, forward
from ..diffcore import tensor as T
from ..errors import ShapeError
from .sensitivity import NoiseProbe
from .thresholds import interquartile_range


def _softmax_rows(logits: Tensor) -> Tensor:
    return T.softmax_rows(Variable(logits, op="logits", requires_grad=False)).data


def tws_scores(
    model: Classifier, xs: npt.ArrayLike, probe: NoiseProbe, indices: npt.ArrayLike | None = None
) -> np.ndarray:
    """L1 change of the softmax vector under the probe's noise, per sample."""
    graph = as_graph(model)
    batch, _ = graph.as_batch(xs)
    ids = np.arange(len(batch)) if indices is None else np.asarray(indices, dtype=np.int64)
    noisy = batch + np.stack([probe.noise(x, i) for x, i in zip(batch, ids)])
    clean = _softmax_rows(forward(graph, batch))
    return np.abs(_softmax_rows(forward(graph, noisy)) - clean).sum(axis=1)


def tws_score(model: Classifier, x: npt.ArrayLike, probe: NoiseProbe, index: int = 0) -> float:
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    return float(tws_scores(graph, batch, probe, [index])[0])


def uloo_scores(
    model: Classifier,
    xs: npt.ArrayLike,
    m: int = DEFAULT_STEPS,
    attribution: str = "ig",
) -> np.ndarray:
    """Interquartile range of each sample's attribution entries (target = predicted class)."""
    graph = as_graph(model)
    batch, _ = graph.as_batch(xs)
    targets = np.argmax(forward(graph, batch), axis=1)
    if attribution == "loo":
        maps = np.stack(
            [leave_one_out(graph, x, int(t)).scores for x, t in zip(batch, targets)]
        )
    elif attribution == "ig":
        maps = ig_batch(graph, batch, targets, m)
    else:
        raise ValueError(f"unknown attribution {attribution!r}; use 'ig' or 'loo'")
    return np.array([interquartile_range(entry) for entry in maps])


def uloo_score(model: Classifier, x: npt.ArrayLike, m: int = DEFAULT_STEPS) -> float:
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    return float(uloo_scores(graph, batch, m)[0])


def bit_depth(xs: Tensor, bits: int) -> Tensor:
    """Round [0, 1] values to ``bits`` bits."""
    levels = 2**bits - 1
    return np.round(xs * levels) / levels


def median_smooth(xs: Tensor, size: int, image_ndim: int) -> Tensor:
    """``size`` x ``size`` median filter over the spatial axes, edges replicated."""
    footprint = (1,) * (xs.ndim - 2) + (size, size)
    if image_ndim not in (2, 3):
        raise ShapeError("median smoothing needs (H, W) or (C, H, W) samples")
    return median_filter(xs, size=footprint, mode="nearest")


def default_bits(input_shape: tuple[int, ...]) -> int:
    """1 bit for single-channel images, 5 for multi-channel (colour) ones."""
    return 5 if len(input_shape) == 3 and input_shape[0] > 1 else 1


def fs_scores(
    model: Classifier,
    xs: npt.ArrayLike,
    bits: int | str | None = "auto",
    median_size: int | None = 2,
) -> np.ndarray:
    """
    Max over squeezers of the L1 distance between softmax vectors of the
    squeezed and the original sample.

    ``bits="auto"`` picks the depth from the channel count (see ``default_bits``);
    None skips that squeezer.

    Raises:
        ShapeError: If the model input is not image-shaped
    """
    graph = as_graph(model)
    if len(graph.input_shape) not in (2, 3):
        raise ShapeError(
            f"feature squeezing needs image input (H, W) or (C, H, W), got {graph.input_shape}"
        )
    batch, _ = graph.as_batch(xs)
    if bits == "auto":
        bits = default_bits(graph.input_shape)
    reference = _softmax_rows(forward(graph, batch))
    squeezed: list[Tensor] = []
    if bits is not None:
        squeezed.append(bit_depth(batch, int(bits)))
    if median_size is not None:
        squeezed.append(median_smooth(batch, median_size, len(graph.input_shape)))
    if not squeezed:
        return np.zeros(len(batch))
    distances = [
        np.abs(_softmax_rows(forward(graph, variant)) - reference).sum(axis=1) for variant in squeezed
    ]
    return np.max(np.vstack(distances), axis=0)


def fs_score(
    model: Classifier, x: npt.ArrayLike, bits: int | str | None = "auto", median_size: int | None = 2
) -> float:
    graph = as_graph(model)
    batch, _ = graph.as_batch(x)
    return float(fs_scores(graph, batch, bits, median_size)[0])
