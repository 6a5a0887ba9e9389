# src/styleswap/errors.py
from typing import Optional


class ShapeError(ValueError):
    """Raised when tensor extents do not fit an operation."""


class ConfigError(ValueError):
    """Raised when a tunable is out of its valid range."""


class PairingError(ValueError):
    """Raised when an inverse network is used with an encoder it was not built for."""


class ImageFormatError(ValueError):
    """Raised for unsupported or undecodable image files."""


class EmptyPoolError(ValueError):
    """Raised when a dataset folder holds no decodable image."""


class WeightFileError(ValueError):
    """Raised when a weight file cannot be parsed."""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class PoolExhaustedError(RuntimeError):
    """Raised when an image pool cannot supply another minibatch in this epoch."""


class DivergenceError(ArithmeticError):
    """Raised when a loss becomes NaN or infinite."""

    def __init__(self, message: str, checkpoint: Optional[str] = None):
        if checkpoint:
            message = f"{message} (last good checkpoint: {checkpoint})"
        super().__init__(message)
        self.checkpoint = checkpoint
