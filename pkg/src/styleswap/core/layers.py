"""
Forward and backward passes for the layer kinds the encoders and inverse
networks are built from. Activations are (h, w, d) arrays; convolution
weights are (k, k, in_channels, out_channels).
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, get_dtype

logger = logging.getLogger(__name__)

INSTANCE_NORM_EPS = 1e-5


class LayerKind(str, Enum):
    CONV = "conv"
    TRANSPOSED_CONV = "transposed_conv"
    MAXPOOL = "maxpool"
    RELU = "relu"
    INSTANCE_NORM = "instance_norm"
    NN_UPSAMPLE = "nn_upsample"


WEIGHTED_KINDS = (LayerKind.CONV, LayerKind.TRANSPOSED_CONV)
RESAMPLING_KINDS = (LayerKind.MAXPOOL, LayerKind.NN_UPSAMPLE)


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    filter_size: int = 0
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    out_channels: int = 0
    factor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.kind in WEIGHTED_KINDS:
            if self.filter_size < 1 or self.stride < 1 or self.padding < 0:
                raise ShapeError(f"Invalid {self.kind.value} geometry: {self}.")
            if self.in_channels < 1 or self.out_channels < 1:
                raise ShapeError(f"{self.kind.value} needs in/out channels >= 1: {self}.")
        if self.kind in RESAMPLING_KINDS and self.factor < 1:
            raise ShapeError(f"{self.kind.value} factor must be >= 1: {self}.")

    @classmethod
    def conv(cls, in_channels: int, out_channels: int, filter_size: int = 3,
             stride: int = 1, padding: int = 1) -> "LayerSpec":
        return cls(LayerKind.CONV, filter_size, stride, padding, in_channels, out_channels)

    @classmethod
    def transposed_conv(cls, in_channels: int, out_channels: int, filter_size: int = 3,
                        stride: int = 1, padding: int = 0) -> "LayerSpec":
        return cls(LayerKind.TRANSPOSED_CONV, filter_size, stride, padding, in_channels, out_channels)

    @classmethod
    def maxpool(cls, factor: int = 2) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL, factor=factor)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(LayerKind.RELU)

    @classmethod
    def instance_norm(cls, channels: int = 0) -> "LayerSpec":
        return cls(LayerKind.INSTANCE_NORM, in_channels=channels, out_channels=channels)

    @classmethod
    def nn_upsample(cls, factor: int = 2) -> "LayerSpec":
        return cls(LayerKind.NN_UPSAMPLE, factor=factor)

    @property
    def has_params(self) -> bool:
        return self.kind in WEIGHTED_KINDS

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        return (self.filter_size, self.filter_size, self.in_channels, self.out_channels)


@dataclass
class LayerParams:
    weights: Tensor
    bias: Tensor


@dataclass
class LayerGrad:
    grad_input: Tensor
    grad_weights: Optional[Tensor] = None
    grad_bias: Optional[Tensor] = None


@dataclass
class Layer:
    spec: LayerSpec
    params: Optional[LayerParams] = None

    def __post_init__(self):
        if self.spec.has_params:
            if self.params is None:
                raise ShapeError(f"{self.spec.kind.value} layer needs parameters.")
            if self.params.weights.shape != self.spec.weight_shape:
                raise ShapeError(
                    f"Weights {self.params.weights.shape} do not match {self.spec.weight_shape}."
                )
            if self.params.bias.shape != (self.spec.out_channels,):
                raise ShapeError(
                    f"Bias {self.params.bias.shape} does not match ({self.spec.out_channels},)."
                )
        elif self.params is not None:
            raise ShapeError(f"{self.spec.kind.value} layer takes no parameters.")


def he_uniform_params(spec: LayerSpec, rng: np.random.Generator) -> LayerParams:
    """He-style uniform init scaled by fan-in; biases start at zero."""
    fan_in = spec.filter_size * spec.filter_size * spec.in_channels
    bound = np.sqrt(6.0 / fan_in)
    weights = rng.uniform(-bound, bound, size=spec.weight_shape).astype(get_dtype())
    bias = np.zeros(spec.out_channels, dtype=get_dtype())
    return LayerParams(weights, bias)


def output_shape(spec: LayerSpec, shape: Sequence[int]) -> Tuple[int, int, int]:
    h, w, d = shape
    if spec.kind == LayerKind.CONV:
        k, s, p = spec.filter_size, spec.stride, spec.padding
        if k > h + 2 * p or k > w + 2 * p:
            raise ShapeError(f"Filter {k}x{k} is larger than the padded input {h + 2 * p}x{w + 2 * p}.")
        return ((h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1, spec.out_channels)
    if spec.kind == LayerKind.TRANSPOSED_CONV:
        k, s, p = spec.filter_size, spec.stride, spec.padding
        oh, ow = (h - 1) * s + k - 2 * p, (w - 1) * s + k - 2 * p
        if oh < 1 or ow < 1:
            raise ShapeError(f"Transposed convolution padding {p} leaves no output for {h}x{w}.")
        return (oh, ow, spec.out_channels)
    if spec.kind == LayerKind.MAXPOOL:
        oh, ow = h // spec.factor, w // spec.factor
        if oh < 1 or ow < 1:
            raise ShapeError(f"Input {h}x{w} is smaller than one {spec.factor}x{spec.factor} pooling window.")
        return (oh, ow, d)
    if spec.kind == LayerKind.NN_UPSAMPLE:
        return (h * spec.factor, w * spec.factor, d)
    return (h, w, d)


def _check_input(x: Tensor, spec: LayerSpec) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{spec.kind.value} expects an (h, w, d) tensor, got shape {x.shape}.")
    if spec.in_channels and x.shape[2] != spec.in_channels:
        raise ShapeError(
            f"{spec.kind.value} expects {spec.in_channels} channels, got {x.shape[2]}."
        )


def _check_grad(grad_output: Tensor, spec: LayerSpec, x: Tensor) -> None:
    expected = output_shape(spec, x.shape)
    if grad_output.shape != expected:
        raise ShapeError(f"grad_output shape {grad_output.shape} does not match output {expected}.")


def _windows(x: Tensor, k: int, stride: int) -> Tensor:
    """View of every k x k window: (oh, ow, d, k, k)."""
    return sliding_window_view(x, (k, k), axis=(0, 1))[::stride, ::stride]


def fold_patches(cols: Tensor, size: Tuple[int, int], stride: int) -> Tensor:
    """
    Scatter-adds (oh, ow, k, k, d) patches onto an (H, W, d) canvas, the patch
    at grid cell (i, j) landing at (i * stride, j * stride). This is the
    transposed-convolution accumulation; summation order is fixed.
    """
    oh, ow, k, _, d = cols.shape
    out = np.zeros((size[0], size[1], d), dtype=cols.dtype)
    row_end = stride * (oh - 1) + 1
    col_end = stride * (ow - 1) + 1
    for a in range(k):
        for b in range(k):
            out[a:a + row_end:stride, b:b + col_end:stride] += cols[:, :, a, b]
    return out


def _pad(x: Tensor, p: int) -> Tensor:
    if p == 0:
        return x
    return np.pad(x, ((p, p), (p, p), (0, 0)))


def conv2d_forward(x: Tensor, spec: LayerSpec, params: LayerParams) -> Tensor:
    _check_input(x, spec)
    output_shape(spec, x.shape)
    k, s, p = spec.filter_size, spec.stride, spec.padding
    win = _windows(_pad(x, p), k, s)
    out = np.tensordot(win, params.weights, axes=([3, 4, 2], [0, 1, 2]))
    return out + params.bias


def conv2d_backward(x: Tensor, spec: LayerSpec, params: LayerParams, grad_output: Tensor) -> LayerGrad:
    _check_input(x, spec)
    _check_grad(grad_output, spec, x)
    h, w, _ = x.shape
    k, s, p = spec.filter_size, spec.stride, spec.padding
    xp = _pad(x, p)
    win = _windows(xp, k, s)
    grad_weights = np.tensordot(win, grad_output, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)
    grad_bias = grad_output.sum(axis=(0, 1))
    cols = np.tensordot(grad_output, params.weights, axes=([2], [3]))
    grad_padded = fold_patches(cols, xp.shape[:2], s)
    grad_input = grad_padded[p:p + h, p:p + w]
    return LayerGrad(np.ascontiguousarray(grad_input), np.ascontiguousarray(grad_weights), grad_bias)


def transposed_conv2d_forward(x: Tensor, spec: LayerSpec, params: LayerParams) -> Tensor:
    _check_input(x, spec)
    oh, ow, _ = output_shape(spec, x.shape)
    k, s, p = spec.filter_size, spec.stride, spec.padding
    h, w, _ = x.shape
    cols = np.tensordot(x, params.weights, axes=([2], [2]))
    full = fold_patches(cols, ((h - 1) * s + k, (w - 1) * s + k), s)
    return full[p:p + oh, p:p + ow] + params.bias


def transposed_conv2d_backward(x: Tensor, spec: LayerSpec, params: LayerParams,
                               grad_output: Tensor) -> LayerGrad:
    _check_input(x, spec)
    _check_grad(grad_output, spec, x)
    k, s, p = spec.filter_size, spec.stride, spec.padding
    win = _windows(_pad(grad_output, p), k, s)
    grad_input = np.tensordot(win, params.weights, axes=([3, 4, 2], [0, 1, 3]))
    grad_weights = np.tensordot(x, win, axes=([0, 1], [0, 1])).transpose(2, 3, 0, 1)
    grad_bias = grad_output.sum(axis=(0, 1))
    return LayerGrad(grad_input, np.ascontiguousarray(grad_weights), grad_bias)


def _pool_blocks(x: Tensor, f: int) -> Tensor:
    # Trailing rows/columns that do not fill a window are dropped.
    h2, w2 = x.shape[0] // f, x.shape[1] // f
    d = x.shape[2]
    blocks = x[:h2 * f, :w2 * f].reshape(h2, f, w2, f, d)
    return blocks.transpose(0, 2, 1, 3, 4).reshape(h2, w2, f * f, d)


def maxpool_forward(x: Tensor, spec: LayerSpec) -> Tensor:
    _check_input(x, spec)
    output_shape(spec, x.shape)
    return _pool_blocks(x, spec.factor).max(axis=2)


def maxpool_backward(x: Tensor, spec: LayerSpec, grad_output: Tensor) -> LayerGrad:
    _check_input(x, spec)
    _check_grad(grad_output, spec, x)
    f = spec.factor
    blocks = _pool_blocks(x, f)
    h2, w2, _, d = blocks.shape
    # argmax returns the first maximum in scan order.
    winner = blocks.argmax(axis=2)
    routed = np.zeros_like(blocks, dtype=grad_output.dtype)
    np.put_along_axis(routed, winner[:, :, None, :], grad_output[:, :, None, :], axis=2)
    grad_input = np.zeros(x.shape, dtype=grad_output.dtype)
    grad_input[:h2 * f, :w2 * f] = routed.reshape(h2, w2, f, f, d).transpose(0, 2, 1, 3, 4).reshape(
        h2 * f, w2 * f, d
    )
    return LayerGrad(grad_input)


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(x: Tensor, grad_output: Tensor) -> LayerGrad:
    # Subgradient at exactly 0 is 0.
    return LayerGrad(grad_output * (x > 0))


def _instance_stats(x: Tensor, spec: LayerSpec):
    _check_input(x, spec)
    if x.shape[0] * x.shape[1] < 2:
        raise ShapeError("Instance norm needs at least two spatial cells per channel.")
    mean = x.mean(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(x.var(axis=(0, 1)) + INSTANCE_NORM_EPS)
    return (x - mean) * inv_std, inv_std


def instance_norm_forward(x: Tensor, spec: LayerSpec) -> Tensor:
    normalized, _ = _instance_stats(x, spec)
    return normalized


def instance_norm_backward(x: Tensor, spec: LayerSpec, grad_output: Tensor) -> LayerGrad:
    normalized, inv_std = _instance_stats(x, spec)
    _check_grad(grad_output, spec, x)
    n = x.shape[0] * x.shape[1]
    grad_sum = grad_output.sum(axis=(0, 1))
    grad_dot = (grad_output * normalized).sum(axis=(0, 1))
    grad_input = (inv_std / n) * (n * grad_output - grad_sum - normalized * grad_dot)
    return LayerGrad(grad_input)


def nn_upsample_forward(x: Tensor, spec: LayerSpec) -> Tensor:
    _check_input(x, spec)
    f = spec.factor
    return np.repeat(np.repeat(x, f, axis=0), f, axis=1)


def nn_upsample_backward(x: Tensor, spec: LayerSpec, grad_output: Tensor) -> LayerGrad:
    _check_input(x, spec)
    _check_grad(grad_output, spec, x)
    h, w, d = x.shape
    f = spec.factor
    return LayerGrad(grad_output.reshape(h, f, w, f, d).sum(axis=(1, 3)))


def layer_forward(layer: Layer, x: Tensor) -> Tensor:
    spec = layer.spec
    if spec.kind == LayerKind.CONV:
        return conv2d_forward(x, spec, layer.params)
    if spec.kind == LayerKind.TRANSPOSED_CONV:
        return transposed_conv2d_forward(x, spec, layer.params)
    if spec.kind == LayerKind.MAXPOOL:
        return maxpool_forward(x, spec)
    if spec.kind == LayerKind.RELU:
        return relu_forward(x)
    if spec.kind == LayerKind.INSTANCE_NORM:
        return instance_norm_forward(x, spec)
    return nn_upsample_forward(x, spec)


def layer_backward(layer: Layer, x: Tensor, grad_output: Tensor) -> LayerGrad:
    spec = layer.spec
    if spec.kind == LayerKind.CONV:
        return conv2d_backward(x, spec, layer.params, grad_output)
    if spec.kind == LayerKind.TRANSPOSED_CONV:
        return transposed_conv2d_backward(x, spec, layer.params, grad_output)
    if spec.kind == LayerKind.MAXPOOL:
        return maxpool_backward(x, spec, grad_output)
    if spec.kind == LayerKind.RELU:
        if x.shape != grad_output.shape:
            raise ShapeError(f"grad_output shape {grad_output.shape} does not match {x.shape}.")
        return relu_backward(x, grad_output)
    if spec.kind == LayerKind.INSTANCE_NORM:
        return instance_norm_backward(x, spec, grad_output)
    return nn_upsample_backward(x, spec, grad_output)


def forward_stack(layers: Sequence[Layer], x: Tensor) -> Tuple[Tensor, List[Tensor]]:
    """Runs the layers in order; returns the output and every layer's input."""
    inputs = []
    for layer in layers:
        inputs.append(x)
        x = layer_forward(layer, x)
    return x, inputs


def backward_stack(layers: Sequence[Layer], inputs: Sequence[Tensor],
                   grad_output: Tensor) -> Tuple[Tensor, List[Optional[LayerGrad]]]:
    """Reverse pass over forward_stack; returns grad w.r.t. the stack input and per-layer grads."""
    grads: List[Optional[LayerGrad]] = [None] * len(layers)
    grad = grad_output
    for index in range(len(layers) - 1, -1, -1):
        layer_grad = layer_backward(layers[index], inputs[index], grad)
        grads[index] = layer_grad
        grad = layer_grad.grad_input
    return grad, grads


def stack_output_shape(layers: Sequence[Layer], shape: Sequence[int]) -> Tuple[int, int, int]:
    shape = tuple(shape)
    for layer in layers:
        shape = output_shape(layer.spec, shape)
    return shape


def validate_chain(layers: Sequence[Layer], in_channels: int) -> int:
    """Checks that channel counts chain; returns the stack's output channels."""
    channels = in_channels
    for index, layer in enumerate(layers):
        spec = layer.spec
        if spec.in_channels and spec.in_channels != channels:
            raise ShapeError(
                f"Layer {index} ({spec.kind.value}) expects {spec.in_channels} channels "
                f"but receives {channels}."
            )
        if spec.has_params:
            channels = spec.out_channels
    return channels
