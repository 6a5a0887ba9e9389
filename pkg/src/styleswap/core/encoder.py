"""
Feature functions: fixed feedforward stacks mapping [0, 1] RGB images into
activation space. The encoders are never trained here; their weights are
random, tiny, or loaded from a weight file.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ..errors import PairingError, ShapeError
from .layers import (
    Layer,
    LayerKind,
    LayerSpec,
    backward_stack,
    forward_stack,
    he_uniform_params,
    stack_output_shape,
    validate_chain,
)
from .tensor import Tensor, make_rng

logger = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class EncoderSpec:
    """
    An ordered layer stack plus the per-channel preprocessing applied to the
    input image: x = (image - mean) * scale.
    """
    name: str
    layers: List[Layer] = field(default_factory=list)
    mean: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.mean = tuple(float(v) for v in self.mean)
        self.scale = tuple(float(v) for v in self.scale)
        if len(self.mean) != 3 or len(self.scale) != 3:
            raise ShapeError("Encoder preprocessing needs one mean and one scale per RGB channel.")
        self._out_channels = validate_chain(self.layers, 3)

    @property
    def out_channels(self) -> int:
        return self._out_channels

    @property
    def downsample_factor(self) -> int:
        factor = 1
        for layer in self.layers:
            if layer.spec.kind == LayerKind.MAXPOOL:
                factor *= layer.spec.factor
        return factor

    def output_shape(self, height: int, width: int) -> Tuple[int, int, int]:
        if height < self.downsample_factor or width < self.downsample_factor:
            raise ShapeError(
                f"Image {height}x{width} is smaller than one output pixel of '{self.name}' "
                f"(downsample factor {self.downsample_factor})."
            )
        return stack_output_shape(self.layers, (height, width, 3))


@dataclass
class ActivationTrace:
    """Per-layer inputs retained by encode() for encode_backward()."""
    encoder_name: str
    image_shape: Tuple[int, int, int]
    output_shape: Tuple[int, int, int]
    inputs: List[Tensor]


def _preprocess_arrays(spec: EncoderSpec, dtype) -> Tuple[Tensor, Tensor]:
    return np.asarray(spec.mean, dtype=dtype), np.asarray(spec.scale, dtype=dtype)


def encode(image: Tensor, spec: EncoderSpec) -> Tuple[Tensor, ActivationTrace]:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"encode expects an h x w x 3 image, got shape {image.shape}.")
    expected = spec.output_shape(image.shape[0], image.shape[1])
    mean, scale = _preprocess_arrays(spec, image.dtype)
    activations, inputs = forward_stack(spec.layers, (image - mean) * scale)
    trace = ActivationTrace(spec.name, tuple(image.shape), expected, inputs)
    return activations, trace


def encode_backward(trace: ActivationTrace, spec: EncoderSpec, grad_activations: Tensor) -> Tensor:
    """Gradient of <grad_activations, encode(image)> with respect to the image."""
    if trace.encoder_name != spec.name or len(trace.inputs) != len(spec.layers):
        raise ShapeError(
            f"Activation trace from '{trace.encoder_name}' does not belong to encoder '{spec.name}'."
        )
    if grad_activations.shape != trace.output_shape:
        raise ShapeError(
            f"grad_activations shape {grad_activations.shape} does not match {trace.output_shape}."
        )
    grad_input, _ = backward_stack(spec.layers, trace.inputs, grad_activations)
    _, scale = _preprocess_arrays(spec, grad_input.dtype)
    return grad_input * scale


def _conv_relu(rng: np.random.Generator, in_channels: int, out_channels: int) -> List[Layer]:
    spec = LayerSpec.conv(in_channels, out_channels)
    return [Layer(spec, he_uniform_params(spec, rng)), Layer(LayerSpec.relu())]


def build_truncated_vgg19(seed: int = 0) -> EncoderSpec:
    """VGG-19 from the input layer up to relu3_1, randomly initialized."""
    rng = make_rng(seed)
    layers = []
    layers += _conv_relu(rng, 3, 64)      # relu1_1
    layers += _conv_relu(rng, 64, 64)     # relu1_2
    layers.append(Layer(LayerSpec.maxpool(2)))
    layers += _conv_relu(rng, 64, 128)    # relu2_1
    layers += _conv_relu(rng, 128, 128)   # relu2_2
    layers.append(Layer(LayerSpec.maxpool(2)))
    layers += _conv_relu(rng, 128, 256)   # relu3_1
    scale = tuple(1.0 / std for std in IMAGENET_STD)
    return EncoderSpec(f"vgg19-relu3_1-seed{seed}", layers, IMAGENET_MEAN, scale)


def build_identity() -> EncoderSpec:
    """Style swap directly in RGB space."""
    return EncoderSpec("identity")


def build_tiny(channels: int = 8, seed: int = 0) -> EncoderSpec:
    """One conv-relu and one max-pool: a desk-scale stand-in for the VGG stack."""
    if channels < 1:
        raise ShapeError(f"Tiny encoder needs at least one channel, got {channels}.")
    rng = make_rng(seed)
    layers = _conv_relu(rng, 3, channels) + [Layer(LayerSpec.maxpool(2))]
    return EncoderSpec(f"tiny{channels}-seed{seed}", layers)


def resolve_encoder(token: str, seed: int = 0) -> EncoderSpec:
    """
    Maps a command-line encoder token to a spec: identity, tiny, tiny:<channels>,
    vgg19, or file:<path> for a saved weight file.
    """
    if token == "identity":
        return build_identity()
    if token == "tiny":
        return build_tiny(seed=seed)
    if token.startswith("tiny:"):
        return build_tiny(int(token.split(":", 1)[1]), seed=seed)
    if token == "vgg19":
        return build_truncated_vgg19(seed)
    if token.startswith("file:"):
        from .io_formats import load_weights

        spec = load_weights(token.split(":", 1)[1])
        if not isinstance(spec, EncoderSpec):
            raise PairingError(f"{token} holds an inverse network, not an encoder.")
        return spec
    raise ValueError(f"Unsupported encoder: {token}. Please use identity, tiny, vgg19 or file:PATH.")


def encoder_from_name(name: str) -> Optional[EncoderSpec]:
    """Rebuilds a built-in encoder from the name it reports; None for names only a weight file can supply."""
    if name == "identity":
        return build_identity()
    match = re.fullmatch(r"vgg19-relu3_1-seed(\d+)", name)
    if match:
        return build_truncated_vgg19(int(match.group(1)))
    match = re.fullmatch(r"tiny(\d+)-seed(\d+)", name)
    if match:
        return build_tiny(int(match.group(1)), int(match.group(2)))
    return None
