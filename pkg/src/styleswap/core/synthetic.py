"""Seeded desk-scale images: smooth "natural" scenes and stroke/stripe "paintings"."""

from typing import List, Tuple

import numpy as np

from .tensor import Tensor, get_dtype, make_rng


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    scale = max(size - 1, 1)
    yy, xx = np.mgrid[0:size, 0:size]
    return yy / scale, xx / scale


def natural_image(size: int, rng: np.random.Generator) -> Tensor:
    """A two-colour linear gradient with a few soft Gaussian blobs on top."""
    yy, xx = _grid(size)
    start, end = rng.uniform(0.1, 0.9, size=(2, 3))
    direction = rng.uniform(-1.0, 1.0, size=2)
    ramp = direction[0] * yy + direction[1] * xx
    ramp = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-6)
    image = start + (end - start) * ramp[..., None]
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0.0, 1.0, size=2)
        radius = rng.uniform(0.08, 0.3)
        colour = rng.uniform(0.0, 1.0, size=3)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius ** 2))[..., None]
        image = image * (1 - weight) + colour * weight
    return np.clip(image, 0.0, 1.0).astype(get_dtype())


def painting_image(size: int, rng: np.random.Generator) -> Tensor:
    """Oriented stripes in a saturated palette, crossed by a few hard-edged strokes."""
    yy, xx = _grid(size)
    palette = rng.uniform(0.0, 1.0, size=(3, 3))
    palette[rng.integers(0, 3), rng.integers(0, 3)] = 1.0
    angle = rng.uniform(0.0, np.pi)
    frequency = rng.uniform(2.0, 6.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * frequency * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
    image = palette[0] * wave[..., None] + palette[1] * (1 - wave[..., None])
    for _ in range(rng.integers(3, 7)):
        y0, x0 = rng.uniform(0.0, 1.0, size=2)
        stroke_angle = angle + rng.normal(0.0, 0.3)
        length = rng.uniform(0.2, 0.6)
        width = rng.uniform(0.02, 0.06)
        along = (xx - x0) * np.cos(stroke_angle) + (yy - y0) * np.sin(stroke_angle)
        across = -(xx - x0) * np.sin(stroke_angle) + (yy - y0) * np.cos(stroke_angle)
        mask = (np.abs(across) < width) & (along > 0) & (along < length)
        image[mask] = palette[2]
    return np.clip(image, 0.0, 1.0).astype(get_dtype())


def make_images(count: int, size: int, role: str, seed: int = 0) -> List[Tensor]:
    if role not in ("natural", "painting"):
        raise ValueError(f"Unsupported role: {role}. Please use 'natural' or 'painting'.")
    rng = make_rng(seed)
    draw = natural_image if role == "natural" else painting_image
    return [draw(size, rng) for _ in range(count)]


def synthetic_pools(total: int, size: int = 32, seed: int = 0) -> Tuple[List[Tensor], List[Tensor]]:
    """Splits `total` images evenly between a natural pool and a painting pool."""
    natural = make_images(total - total // 2, size, "natural", seed)
    paintings = make_images(total // 2, size, "painting", seed + 1)
    return natural, paintings
