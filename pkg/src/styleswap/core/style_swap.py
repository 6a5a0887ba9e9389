"""
Style swap: replace every content activation patch by the style activation
patch with the highest normalized cross-correlation, then rebuild the
activation map by averaging overlapping patches.

The fast path is a convolution (normalized style patches as filters), a
channel-wise argmax and a transposed convolution (unnormalized style patches
as filters) followed by division by the per-cell overlap count.
brute_force_style_swap evaluates the same matching patch by patch and is the
reference the fast path is tested against.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from ..errors import ConfigError, ShapeError
from .layers import LayerParams, LayerSpec, conv2d_forward, fold_patches
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwapConfig:
    patch_size: int = 3
    stride: int = 1
    epsilon: float = 1e-12
    average_ties: bool = False

    def validate(self) -> "SwapConfig":
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}.")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}.")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}.")
        return self

    def grid(self, height: int, width: int) -> Tuple[int, int]:
        """Patch-grid extent for an activation map of the given size."""
        s = self.patch_size
        if s > height or s > width:
            raise ShapeError(
                f"Patch size {s} does not fit activations of size {height}x{width}."
            )
        return ((height - s) // self.stride + 1, (width - s) // self.stride + 1)

    def check_covers(self, height: int, width: int) -> None:
        """Raises ShapeError unless the patch grid covers every cell of an activation map."""
        self.grid(height, width)
        if self.stride > self.patch_size:
            raise ShapeError(
                f"Stride {self.stride} is larger than patch size {self.patch_size}; "
                f"cells between patches would be left uncovered."
            )
        left_h = (height - self.patch_size) % self.stride
        left_w = (width - self.patch_size) % self.stride
        if left_h or left_w:
            raise ShapeError(
                f"Patch size {self.patch_size} with stride {self.stride} leaves the last "
                f"{left_h} row(s) and {left_w} column(s) of a {height}x{width} map uncovered; "
                f"choose extents with (size - patch_size) divisible by the stride."
            )


@dataclass
class PatchSet:
    patches: Tensor            # (n, s, s, d)
    origins: np.ndarray        # (n, 2) top-left (row, col) of each patch
    grid: Tuple[int, int]
    zero_mask: Optional[np.ndarray] = None  # set by normalize_patches

    @property
    def count(self) -> int:
        return self.patches.shape[0]

    @property
    def channels(self) -> int:
        return self.patches.shape[3]


@dataclass
class SwapResult:
    activations: Tensor
    match_map: Tensor
    match_indices: np.ndarray
    distinct_patches: int
    mean_correlation: float
    content_patches: int
    style_patches: int
    tied_locations: int

    def stats(self) -> dict:
        return {
            "content_patches": self.content_patches,
            "style_patches": self.style_patches,
            "distinct_patches": self.distinct_patches,
            "mean_correlation": round(self.mean_correlation, 6),
            "tied_locations": self.tied_locations,
        }


def _check_activations(acts: Tensor, what: str) -> None:
    if acts.ndim != 3:
        raise ShapeError(f"{what} activations must be (h, w, d), got shape {acts.shape}.")


def extract_patches(activations: Tensor, config: SwapConfig) -> PatchSet:
    _check_activations(activations, "Input")
    config.validate()
    s, stride = config.patch_size, config.stride
    gh, gw = config.grid(activations.shape[0], activations.shape[1])
    windows = np.lib.stride_tricks.sliding_window_view(activations, (s, s), axis=(0, 1))
    windows = windows[::stride, ::stride]
    patches = np.ascontiguousarray(windows.transpose(0, 1, 3, 4, 2)).reshape(
        gh * gw, s, s, activations.shape[2]
    )
    rows, cols = np.meshgrid(np.arange(gh) * stride, np.arange(gw) * stride, indexing="ij")
    origins = np.stack([rows.reshape(-1), cols.reshape(-1)], axis=1)
    return PatchSet(patches, origins, (gh, gw))


def patch_norms(patch_set: PatchSet) -> np.ndarray:
    flat = patch_set.patches.reshape(patch_set.count, -1)
    return np.sqrt(np.einsum("ij,ij->i", flat, flat))


def normalize_patches(patch_set: PatchSet, epsilon: float = 1e-12) -> PatchSet:
    """Scales every patch to unit Frobenius norm; near-zero patches stay zero and are flagged."""
    norms = patch_norms(patch_set)
    zero_mask = norms < epsilon
    safe = np.where(zero_mask, 1.0, norms).astype(patch_set.patches.dtype)
    normalized = patch_set.patches / safe[:, None, None, None]
    normalized[zero_mask] = 0
    if zero_mask.any():
        logger.debug("%d of %d style patches have near-zero norm", int(zero_mask.sum()), patch_set.count)
    return PatchSet(normalized, patch_set.origins, patch_set.grid, zero_mask)


def correlation_map(content: Tensor, style_normalized: PatchSet, config: SwapConfig) -> Tensor:
    """K[a, b, j] = <content patch at (a, b), normalized style patch j>, as one convolution."""
    _check_activations(content, "Content")
    if content.shape[2] != style_normalized.channels:
        raise ShapeError(
            f"Content has {content.shape[2]} channels but style patches have {style_normalized.channels}."
        )
    config.grid(content.shape[0], content.shape[1])
    spec = LayerSpec.conv(
        style_normalized.channels,
        style_normalized.count,
        filter_size=config.patch_size,
        stride=config.stride,
        padding=0,
    )
    filters = np.ascontiguousarray(style_normalized.patches.transpose(1, 2, 3, 0))
    params = LayerParams(filters, np.zeros(style_normalized.count, dtype=filters.dtype))
    return conv2d_forward(content, spec, params)


def argmax_one_hot(correlation: Tensor, excluded: Optional[np.ndarray] = None,
                   average_ties: bool = False) -> Tensor:
    """
    One-hot over the style-patch axis. Ties go to the lowest style index, or
    to every tied index when average_ties is set. Excluded (zero-norm) style
    patches never win unless every patch is excluded.
    """
    scores = correlation
    if excluded is not None and excluded.any() and not excluded.all():
        scores = np.where(excluded, -np.inf, correlation)
    if average_ties:
        best = scores.max(axis=-1, keepdims=True)
        return (scores == best).astype(correlation.dtype)
    winner = scores.argmax(axis=-1)
    one_hot = np.zeros_like(correlation)
    np.put_along_axis(one_hot, winner[..., None], 1, axis=-1)
    return one_hot


@lru_cache(maxsize=64)
def _overlap_counts(height: int, width: int, patch_size: int, stride: int) -> np.ndarray:
    gh = (height - patch_size) // stride + 1
    gw = (width - patch_size) // stride + 1
    ones = np.ones((gh, gw, patch_size, patch_size, 1))
    counts = fold_patches(ones, (height, width), stride)
    counts.setflags(write=False)
    return counts


def overlap_counts(out_shape: Tuple[int, ...], config: SwapConfig) -> np.ndarray:
    """Number of patches covering each cell, (h, w, 1); cached per shape and config."""
    return _overlap_counts(out_shape[0], out_shape[1], config.patch_size, config.stride)


def reconstruct(match_map: Tensor, style_patches: PatchSet, config: SwapConfig,
                out_shape: Tuple[int, int, int]) -> Tensor:
    """
    Transposed convolution of the match map with the unnormalized style patches,
    divided by the per-cell overlap count. The patch grid must cover every
    output cell.
    """
    gh, gw, n_s = match_map.shape
    h, w, d = out_shape
    config.check_covers(h, w)
    if config.grid(h, w) != (gh, gw):
        raise ShapeError(
            f"Output shape {out_shape} gives a {config.grid(h, w)} patch grid, match map has {(gh, gw)}."
        )
    if style_patches.count != n_s or style_patches.channels != d:
        raise ShapeError(
            f"Match map expects {n_s} style patches of depth {d}, got "
            f"{style_patches.count} of depth {style_patches.channels}."
        )
    s = config.patch_size
    flat = match_map.reshape(-1, n_s)
    locations, indices = np.nonzero(flat)
    cols = np.zeros((gh * gw, s, s, d), dtype=style_patches.patches.dtype)
    single_winner = locations.size == gh * gw and np.all(flat[locations, indices] == 1)
    if single_winner:
        cols[locations] = style_patches.patches[indices]
        counts = overlap_counts(out_shape, config)
    else:
        weights = flat[locations, indices].astype(cols.dtype)
        np.add.at(cols, locations, weights[:, None, None, None] * style_patches.patches[indices])
        per_location = flat.sum(axis=1).reshape(gh, gw, 1, 1, 1)
        counts = fold_patches(np.broadcast_to(per_location, (gh, gw, s, s, 1)), (h, w), config.stride)
    summed = fold_patches(cols.reshape(gh, gw, s, s, d), (h, w), config.stride)
    out = np.zeros_like(summed)
    np.divide(summed, counts.astype(summed.dtype), out=out, where=counts > 0)
    return out


def _check_pair(content: Tensor, style: Tensor, config: SwapConfig) -> None:
    _check_activations(content, "Content")
    _check_activations(style, "Style")
    config.validate()
    if content.shape[2] != style.shape[2]:
        raise ShapeError(
            f"Content activations have {content.shape[2]} channels, style activations {style.shape[2]}."
        )
    config.check_covers(content.shape[0], content.shape[1])


def run_style_swap(content: Tensor, style: Tensor, config: Optional[SwapConfig] = None) -> SwapResult:
    config = config or SwapConfig()
    _check_pair(content, style, config)
    style_set = extract_patches(style, config)
    normalized = normalize_patches(style_set, config.epsilon)
    correlation = correlation_map(content, normalized, config)
    match_map = argmax_one_hot(correlation, normalized.zero_mask, config.average_ties)
    activations = reconstruct(match_map, style_set, config, content.shape)

    match_indices = match_map.argmax(axis=-1)
    best = np.take_along_axis(correlation, match_indices[..., None], axis=-1)[..., 0]
    content_norms = patch_norms(extract_patches(content, config)).reshape(best.shape)
    live = content_norms >= config.epsilon
    mean_correlation = float(np.mean(best[live] / content_norms[live])) if live.any() else 0.0
    tied = int(np.count_nonzero(match_map.sum(axis=-1) > 1))

    logger.debug("style swap: %d content patches, %d style patches", best.size, style_set.count)
    return SwapResult(
        activations=activations,
        match_map=match_map,
        match_indices=match_indices,
        distinct_patches=int(np.unique(match_indices).size),
        mean_correlation=mean_correlation,
        content_patches=int(best.size),
        style_patches=style_set.count,
        tied_locations=tied,
    )


def style_swap(content: Tensor, style: Tensor, config: Optional[SwapConfig] = None) -> Tensor:
    return run_style_swap(content, style, config).activations


def brute_force_style_swap(content: Tensor, style: Tensor, config: Optional[SwapConfig] = None) -> Tensor:
    """
    Reference matcher: for each content patch, the literal normalized
    cross-correlation against every style patch, same tie and zero-norm rules
    as the fast path, then an explicit overlap-averaged reconstruction.
    """
    config = config or SwapConfig()
    _check_pair(content, style, config)
    eps = config.epsilon
    content_set = extract_patches(content, config)
    style_set = extract_patches(style, config)
    style_flat = style_set.patches.reshape(style_set.count, -1)
    style_norms = patch_norms(style_set)
    excluded = style_norms < eps
    if excluded.all():
        excluded[:] = False
    style_divisor = np.where(style_norms < eps, 1.0, style_norms)

    s = config.patch_size
    summed = np.zeros(content.shape, dtype=np.result_type(content, style))
    counts = np.zeros(content.shape[:2] + (1,), dtype=summed.dtype)
    for patch, (row, col) in zip(content_set.patches, content_set.origins):
        patch_flat = patch.reshape(-1)
        content_norm = np.sqrt(np.dot(patch_flat, patch_flat))
        scores = (style_flat @ patch_flat) / style_divisor
        if content_norm >= eps:
            scores = scores / content_norm
        scores[excluded] = -np.inf
        if config.average_ties:
            chosen = np.flatnonzero(scores == scores.max())
        else:
            chosen = [int(np.argmax(scores))]
        for j in chosen:
            summed[row:row + s, col:col + s] += style_set.patches[j]
            counts[row:row + s, col:col + s] += 1
    out = np.zeros_like(summed)
    np.divide(summed, counts, out=out, where=counts > 0)
    return out
