"""
Dense tensors for the style swap engine.

Tensors are plain row-major numpy arrays: rank 3 is (h, w, d), rank 4 adds a
leading batch axis. This module owns the precision mode, shape validation,
the seeded generator and the reductions the losses are built from.
"""

import logging
from contextlib import contextmanager
from typing import Iterator, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from ..config import get_settings
from ..errors import ShapeError

logger = logging.getLogger(__name__)

Tensor = NDArray[np.floating]
DTypeLike = Union[str, type, np.dtype]

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = np.dtype(_PRECISIONS[get_settings()["precision"]])


def get_dtype() -> np.dtype:
    return _dtype


def set_precision(dtype: DTypeLike) -> None:
    """Switches the default float type; float64 exists for gradient checks."""
    global _dtype
    if isinstance(dtype, str):
        if dtype not in _PRECISIONS:
            raise ValueError(f"Unsupported precision: {dtype}. Please use 'float32' or 'float64'.")
        dtype = _PRECISIONS[dtype]
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported precision: {resolved}.")
    _dtype = resolved


@contextmanager
def precision(dtype: DTypeLike) -> Iterator[np.dtype]:
    previous = _dtype
    set_precision(dtype)
    try:
        yield _dtype
    finally:
        set_precision(previous)


def validate_shape(shape: Sequence[int]) -> tuple:
    shape = tuple(int(extent) for extent in shape)
    if not shape:
        raise ShapeError("Shape must have at least one axis.")
    if any(extent < 1 for extent in shape):
        raise ShapeError(f"All extents must be >= 1, got {shape}.")
    return shape


def asarray(values, dtype: DTypeLike = None) -> Tensor:
    """Converts to a contiguous array in the current precision unless told otherwise."""
    return np.ascontiguousarray(values, dtype=dtype or _dtype)


def full(shape: Sequence[int], value: float) -> Tensor:
    return np.full(validate_shape(shape), value, dtype=_dtype)


def zeros(shape: Sequence[int]) -> Tensor:
    return full(shape, 0.0)


def ones(shape: Sequence[int]) -> Tensor:
    return full(shape, 1.0)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 streams are identical across platforms for the same seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def random_uniform(shape: Sequence[int], lo: float, hi: float, rng: np.random.Generator) -> Tensor:
    if not lo < hi:
        raise ValueError(f"random_uniform needs lo < hi, got lo={lo}, hi={hi}.")
    shape = validate_shape(shape)
    # Draw in float64 so the stream does not depend on the precision mode.
    sample = rng.uniform(lo, hi, size=shape).astype(_dtype)
    # Rounding to float32 can land exactly on hi.
    if sample.size and sample.max() >= hi:
        sample = np.minimum(sample, np.nextafter(_dtype.type(hi), _dtype.type(lo)))
    return sample


def check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch: {a.shape} vs {b.shape}.")


def add(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b)
    return a + b


def sub(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b)
    return a - b


def mul(a: Tensor, b: Tensor) -> Tensor:
    check_same_shape(a, b)
    return a * b


def scale(a: Tensor, factor: float) -> Tensor:
    return a * a.dtype.type(factor)


def total(a: Tensor) -> float:
    # Reductions accumulate in float64 in either precision mode.
    return float(np.sum(a, dtype=np.float64))


def mean(a: Tensor) -> float:
    return float(np.mean(a, dtype=np.float64))


def maximum(a: Tensor) -> float:
    return float(np.max(a))


def frobenius_norm_sq(a: Tensor) -> float:
    flat = a.reshape(-1).astype(np.float64, copy=False)
    return float(np.dot(flat, flat))

