"""Central finite differences for checking analytic gradients (run in float64)."""

from typing import Callable, Sequence

import numpy as np

from .layers import Layer, LayerKind
from .tensor import Tensor

FD_EPSILON = 1e-4


def numerical_gradient(fn: Callable[[], float], param: Tensor, epsilon: float = FD_EPSILON) -> Tensor:
    """
    Perturbs `param` in place, one element at a time, and returns
    (fn(x + eps) - fn(x - eps)) / (2 eps). The array is restored afterwards.
    """
    grad = np.zeros(param.shape, dtype=np.float64)
    flat = param.reshape(-1)
    if not np.shares_memory(flat, param):
        raise ValueError("numerical_gradient needs a contiguous array it can perturb in place.")
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + epsilon
        plus = fn()
        flat[index] = original - epsilon
        minus = fn()
        flat[index] = original
        grad.reshape(-1)[index] = (plus - minus) / (2.0 * epsilon)
    return grad


def relative_error(analytic: Tensor, numeric: Tensor) -> float:
    """Norm-wise relative error ||a - n|| / max(||a|| + ||n||, tiny)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denominator = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denominator)


def kink_margin(layers: Sequence[Layer], inputs: Sequence[Tensor]) -> float:
    """
    Smallest distance from a non-differentiable point over a traced stack:
    |x| at ReLU inputs and the gap between the two largest values of every
    max-pool window whose maximum is positive.
    """
    margin = np.inf
    for layer, x in zip(layers, inputs):
        if layer.spec.kind == LayerKind.RELU:
            margin = min(margin, float(np.min(np.abs(x))))
        elif layer.spec.kind == LayerKind.MAXPOOL:
            f = layer.spec.factor
            if f < 2:
                continue
            h2, w2, d = x.shape[0] // f, x.shape[1] // f, x.shape[2]
            blocks = x[:h2 * f, :w2 * f].reshape(h2, f, w2, f, d).transpose(0, 2, 1, 3, 4)
            blocks = np.sort(blocks.reshape(h2, w2, f * f, d), axis=2)
            top, runner_up = blocks[:, :, -1], blocks[:, :, -2]
            live = top > 0
            if np.any(live):
                margin = min(margin, float(np.min((top - runner_up)[live])))
    return margin
