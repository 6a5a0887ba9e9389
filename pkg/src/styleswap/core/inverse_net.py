"""
Inverse network: a fully convolutional decoder trained to map activations back
to images, so that a style-swapped activation map can be turned into an
image in a single forward pass.

Training is unsupervised. For each activation sample H the loss is
||encode(invert(H)) - H||_F^2 + lambda * TV(invert(H)); minibatches mix
natural-image activations, painting activations and style-swapped
natural x painting activations.
"""

import copy
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import get_settings, worker_count
from ..errors import (
    ConfigError,
    DivergenceError,
    EmptyPoolError,
    PairingError,
    PoolExhaustedError,
    ShapeError,
)
from .encoder import EncoderSpec, encode, encode_backward
from .layers import (
    Layer,
    LayerKind,
    LayerParams,
    LayerSpec,
    backward_stack,
    forward_stack,
    he_uniform_params,
    stack_output_shape,
    validate_chain,
)
from .optim import Adam, tv_grad, tv_loss
from .style_swap import SwapConfig, style_swap
from .tensor import Tensor, frobenius_norm_sq, get_dtype, make_rng

logger = logging.getLogger(__name__)

ParamGrads = List[Optional[LayerParams]]


@dataclass
class InverseNetSpec:
    name: str
    encoder_name: str
    layers: List[Layer] = field(default_factory=list)

    def __post_init__(self):
        first = next((layer.spec for layer in self.layers if layer.spec.in_channels), None)
        if first is None:
            raise ShapeError(f"Inverse network '{self.name}' has no layer fixing its input channels.")
        self._in_channels = first.in_channels
        out = validate_chain(self.layers, self._in_channels)
        if out != 3:
            raise ShapeError(f"Inverse network '{self.name}' ends with {out} channels, expected 3.")

    @property
    def in_channels(self) -> int:
        return self._in_channels

    @property
    def upsample_factor(self) -> int:
        factor = 1
        for layer in self.layers:
            if layer.spec.kind == LayerKind.NN_UPSAMPLE:
                factor *= layer.spec.factor
        return factor

    def output_shape(self, height: int, width: int) -> Tuple[int, int, int]:
        return stack_output_shape(self.layers, (height, width, self.in_channels))


def check_pairing(net: InverseNetSpec, encoder: EncoderSpec) -> None:
    if net.encoder_name != encoder.name:
        raise PairingError(
            f"Inverse network '{net.name}' inverts '{net.encoder_name}', not encoder '{encoder.name}'."
        )
    if net.in_channels != encoder.out_channels or net.upsample_factor != encoder.downsample_factor:
        raise PairingError(
            f"Inverse network '{net.name}' ({net.in_channels} channels, x{net.upsample_factor}) does not "
            f"fit encoder '{encoder.name}' ({encoder.out_channels} channels, /{encoder.downsample_factor})."
        )


def _conv_in_relu(rng: np.random.Generator, in_channels: int, out_channels: int) -> List[Layer]:
    spec = LayerSpec.conv(in_channels, out_channels)
    return [
        Layer(spec, he_uniform_params(spec, rng)),
        Layer(LayerSpec.instance_norm(out_channels)),
        Layer(LayerSpec.relu()),
    ]


def _conv(rng: np.random.Generator, in_channels: int, out_channels: int) -> Layer:
    spec = LayerSpec.conv(in_channels, out_channels)
    return Layer(spec, he_uniform_params(spec, rng))


def build_vgg_inverse(encoder_name: str = "vgg19-relu3_1-seed0", seed: int = 0) -> InverseNetSpec:
    """Decoder for relu3_1 activations: two nearest-neighbor upsampling stages back to RGB."""
    rng = make_rng(seed)
    layers = []
    layers += _conv_in_relu(rng, 256, 128)
    layers.append(Layer(LayerSpec.nn_upsample(2)))
    layers += _conv_in_relu(rng, 128, 128)
    layers += _conv_in_relu(rng, 128, 64)
    layers.append(Layer(LayerSpec.nn_upsample(2)))
    layers += _conv_in_relu(rng, 64, 64)
    layers.append(_conv(rng, 64, 3))
    return InverseNetSpec(f"inverse-{encoder_name}", encoder_name, layers)


def build_identity_inverse(encoder_name: str = "identity") -> InverseNetSpec:
    """A single 1x1 convolution initialized to the identity map."""
    spec = LayerSpec.conv(3, 3, filter_size=1, padding=0)
    weights = np.eye(3, dtype=get_dtype()).reshape(1, 1, 3, 3)
    params = LayerParams(weights, np.zeros(3, dtype=get_dtype()))
    return InverseNetSpec(f"inverse-{encoder_name}", encoder_name, [Layer(spec, params)])


def build_small_inverse(encoder: EncoderSpec, width: int = 16, seed: int = 0) -> InverseNetSpec:
    """Conv-IN-ReLU, then one upsample + Conv-IN-ReLU stage per encoder pooling stage, then Conv to RGB."""
    rng = make_rng(seed)
    layers = _conv_in_relu(rng, encoder.out_channels, width)
    for layer in encoder.layers:
        if layer.spec.kind == LayerKind.MAXPOOL:
            layers.append(Layer(LayerSpec.nn_upsample(layer.spec.factor)))
            layers += _conv_in_relu(rng, width, width)
    layers.append(_conv(rng, width, 3))
    return InverseNetSpec(f"inverse-{encoder.name}", encoder.name, layers)


def build_inverse_for(encoder: EncoderSpec, seed: int = 0) -> InverseNetSpec:
    if not encoder.layers:
        return build_identity_inverse(encoder.name)
    if encoder.name.startswith("vgg19") and encoder.out_channels == 256:
        return build_vgg_inverse(encoder.name, seed)
    return build_small_inverse(encoder, seed=seed)


def invert(activations: Tensor, net: InverseNetSpec) -> Tensor:
    image, _ = _invert_traced(activations, net)
    return image


def _invert_traced(activations: Tensor, net: InverseNetSpec) -> Tuple[Tensor, List[Tensor]]:
    activations = np.asarray(activations)
    if activations.ndim != 3 or activations.shape[2] != net.in_channels:
        raise ShapeError(
            f"Inverse network '{net.name}' expects h x w x {net.in_channels} activations, "
            f"got shape {activations.shape}."
        )
    return forward_stack(net.layers, activations)


def _sample_loss(activations: Tensor, net: InverseNetSpec, encoder: EncoderSpec, lambda_tv: float,
                 with_grads: bool) -> Tuple[float, Optional[ParamGrads]]:
    image, net_inputs = _invert_traced(activations, net)
    reencoded, trace = encode(image, encoder)
    if reencoded.shape != activations.shape:
        raise ShapeError(
            f"Re-encoded activations {reencoded.shape} do not match inputs {activations.shape}."
        )
    residual = reencoded - activations
    loss = frobenius_norm_sq(residual)
    if lambda_tv:
        loss += lambda_tv * tv_loss(image)
    if not with_grads:
        return loss, None
    grad_image = encode_backward(trace, encoder, 2 * residual)
    if lambda_tv:
        grad_image = grad_image + lambda_tv * tv_grad(image)
    _, layer_grads = backward_stack(net.layers, net_inputs, grad_image)
    grads: ParamGrads = [
        LayerParams(g.grad_weights, g.grad_bias) if layer.spec.has_params else None
        for layer, g in zip(net.layers, layer_grads)
    ]
    return loss, grads


def _map_samples(fn, batch: Sequence[Tensor], workers: Optional[int]):
    workers = workers or worker_count()
    if workers <= 1 or len(batch) <= 1:
        return [fn(sample) for sample in batch]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, batch))


def inversion_loss(batch: Sequence[Tensor], net: InverseNetSpec, encoder: EncoderSpec,
                   lambda_tv: float, workers: Optional[int] = None) -> Tuple[float, ParamGrads]:
    """
    Mean per-sample loss and its gradient with respect to the network
    parameters only. Samples run concurrently; the reduction is in batch order.
    """
    check_pairing(net, encoder)
    if not batch:
        raise ShapeError("inversion_loss needs at least one activation sample.")
    outcomes = _map_samples(lambda h: _sample_loss(h, net, encoder, lambda_tv, True), batch, workers)
    n = len(batch)
    total = 0.0
    reduced: ParamGrads = [
        LayerParams(np.zeros_like(layer.params.weights), np.zeros_like(layer.params.bias))
        if layer.spec.has_params else None
        for layer in net.layers
    ]
    for loss, grads in outcomes:
        total += loss
        for acc, grad in zip(reduced, grads):
            if acc is not None:
                acc.weights += grad.weights
                acc.bias += grad.bias
    for acc in reduced:
        if acc is not None:
            acc.weights /= n
            acc.bias /= n
    return total / n, reduced


def mean_inversion_loss(batch: Sequence[Tensor], net: InverseNetSpec, encoder: EncoderSpec,
                        lambda_tv: float, workers: Optional[int] = None) -> float:
    check_pairing(net, encoder)
    if not batch:
        return float("nan")
    outcomes = _map_samples(lambda h: _sample_loss(h, net, encoder, lambda_tv, False), batch, workers)
    return sum(loss for loss, _ in outcomes) / len(batch)


def parameters(net: InverseNetSpec) -> List[Tensor]:
    arrays = []
    for layer in net.layers:
        if layer.spec.has_params:
            arrays += [layer.params.weights, layer.params.bias]
    return arrays


def flatten_grads(grads: ParamGrads) -> List[Tensor]:
    arrays = []
    for grad in grads:
        if grad is not None:
            arrays += [grad.weights, grad.bias]
    return arrays


class ImagePool:
    """A shuffled pass over a list of images; draw() raises PoolExhaustedError at the end of the pass."""

    def __init__(self, images: Sequence[Tensor], role: str, rng: np.random.Generator):
        if not images:
            raise EmptyPoolError(f"The {role} pool is empty.")
        self.images = list(images)
        self.role = role
        self.rng = rng
        self.order = rng.permutation(len(self.images))
        self.cursor = 0

    def __len__(self) -> int:
        return len(self.images)

    def draw(self, count: int) -> List[Tensor]:
        if self.cursor + count > len(self.order):
            raise PoolExhaustedError(f"The {self.role} pool has {len(self.order) - self.cursor} images left.")
        picked = [self.images[i] for i in self.order[self.cursor:self.cursor + count]]
        self.cursor += count
        return picked

    def reshuffle(self) -> None:
        self.order = self.rng.permutation(len(self.images))
        self.cursor = 0


def make_minibatch(natural_pool: ImagePool, painting_pool: ImagePool, encoder: EncoderSpec,
                   swap_config: SwapConfig, rng: np.random.Generator, n_natural: int = 2,
                   n_painting: int = 2, n_swapped: int = 4) -> List[Tensor]:
    """
    Encoded natural images, encoded paintings, then style-swapped activations
    for n_swapped of the natural x painting pairs (all pairs by default).
    """
    if n_swapped > n_natural * n_painting:
        raise ConfigError(f"n_swapped={n_swapped} exceeds the {n_natural * n_painting} available pairs.")
    for pool, count in ((natural_pool, n_natural), (painting_pool, n_painting)):
        if pool.cursor + count > len(pool.order):
            raise PoolExhaustedError(f"The {pool.role} pool is exhausted.")
    natural = [encode(image, encoder)[0] for image in natural_pool.draw(n_natural)]
    paintings = [encode(image, encoder)[0] for image in painting_pool.draw(n_painting)]
    pairs = list(product(range(n_natural), range(n_painting)))
    if n_swapped < len(pairs):
        chosen = np.sort(rng.choice(len(pairs), size=n_swapped, replace=False))
        pairs = [pairs[i] for i in chosen]
    swapped = [style_swap(natural[i], paintings[j], swap_config) for i, j in pairs]
    return natural + paintings + swapped


@dataclass
class TrainConfig:
    lambda_tv: float = 1e-6
    learning_rate: float = 1e-3
    n_natural: int = 2
    n_painting: int = 2
    n_swapped: int = 4
    epochs: int = 2
    swap_config: SwapConfig = field(default_factory=SwapConfig)
    seed: int = 0
    checkpoint_every: Optional[int] = None
    validate_every: int = 50
    validation_fraction: float = 0.1
    validation_pairs: int = 50
    max_steps: Optional[int] = None
    log_every: int = 10
    workers: Optional[int] = None

    def validate(self) -> "TrainConfig":
        if self.lambda_tv < 0:
            raise ConfigError(f"lambda_tv must be >= 0, got {self.lambda_tv}.")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}.")
        if self.n_natural < 1 or self.n_painting < 1:
            raise ConfigError("Minibatches need at least one natural image and one painting.")
        if not 0 <= self.n_swapped <= self.n_natural * self.n_painting:
            raise ConfigError(
                f"n_swapped must be in [0, {self.n_natural * self.n_painting}], got {self.n_swapped}."
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}.")
        for name in ("validate_every", "validation_pairs", "log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}.")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}.")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}.")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}.")
        self.swap_config.validate()
        return self


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss: float


@dataclass
class ValidationRecord:
    step: int
    real_loss: float
    swapped_loss: float


@dataclass
class TrainReport:
    steps: List[StepRecord]
    validation: List[ValidationRecord]
    checkpoints: List[str]
    net: InverseNetSpec

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.steps]

    def csv_rows(self) -> Tuple[List[str], List[list]]:
        header = ["step", "epoch", "train_loss", "val_real", "val_swapped"]
        by_step = {record.step: record for record in self.validation}
        rows = []
        for record in self.steps:
            row = [record.step, record.epoch, record.loss, "", ""]
            if record.step in by_step:
                row[3] = by_step[record.step].real_loss
                row[4] = by_step[record.step].swapped_loss
            rows.append(row)
        return header, rows


@dataclass
class ValidationSet:
    real: List[Tensor]
    swapped: List[Tensor]


def split_holdout(images: Sequence[Tensor], fraction: float,
                  rng: np.random.Generator) -> Tuple[List[Tensor], List[Tensor]]:
    """Random disjoint split; at least one image is held out."""
    order = rng.permutation(len(images))
    held = max(1, int(round(len(images) * fraction)))
    held_idx = np.sort(order[:held])
    train_idx = np.sort(order[held:])
    return [images[i] for i in train_idx], [images[i] for i in held_idx]


def build_validation_set(natural: Sequence[Tensor], paintings: Sequence[Tensor], encoder: EncoderSpec,
                         swap_config: SwapConfig, max_pairs: int) -> ValidationSet:
    natural_acts = [encode(image, encoder)[0] for image in natural]
    painting_acts = [encode(image, encoder)[0] for image in paintings]
    pairs = list(product(range(len(natural_acts)), range(len(painting_acts))))[:max_pairs]
    swapped = [style_swap(natural_acts[i], painting_acts[j], swap_config) for i, j in pairs]
    return ValidationSet(natural_acts + painting_acts, swapped)


def validation_losses(validation: ValidationSet, net: InverseNetSpec, encoder: EncoderSpec,
                      lambda_tv: float, workers: Optional[int] = None) -> Tuple[float, float]:
    return (
        mean_inversion_loss(validation.real, net, encoder, lambda_tv, workers),
        mean_inversion_loss(validation.swapped, net, encoder, lambda_tv, workers),
    )


@dataclass
class _Progress:
    step: int = 0
    epoch: int = 0


def _state_path(checkpoint_path: str) -> str:
    return f"{checkpoint_path}.state.npz"


def _save_checkpoint(path: str, net: InverseNetSpec, adam: Adam, progress: _Progress,
                     pools: Sequence[ImagePool], rng: np.random.Generator) -> None:
    from .io_formats import save_weights

    save_weights(path, net)
    arrays = adam.state_arrays()
    arrays["step"] = np.array(progress.step)
    arrays["epoch"] = np.array(progress.epoch)
    arrays["rng_state"] = np.array(json.dumps(rng.bit_generator.state))
    for pool in pools:
        arrays[f"{pool.role}_order"] = pool.order
        arrays[f"{pool.role}_cursor"] = np.array(pool.cursor)
    with open(_state_path(path), "wb") as handle:
        np.savez(handle, **arrays)


def _load_checkpoint(path: str, adam_for, progress: _Progress, pools: Sequence[ImagePool],
                     rng: np.random.Generator) -> Tuple[InverseNetSpec, Adam]:
    from .io_formats import load_weights

    net = load_weights(path)
    if not isinstance(net, InverseNetSpec):
        raise PairingError(f"Checkpoint {path} holds an encoder, not an inverse network.")
    adam = adam_for(net)
    with np.load(_state_path(path)) as state:
        adam.load_state_arrays(state)
        progress.step = int(state["step"])
        progress.epoch = int(state["epoch"])
        rng.bit_generator.state = json.loads(str(state["rng_state"]))
        for pool in pools:
            pool.order = np.array(state[f"{pool.role}_order"])
            pool.cursor = int(state[f"{pool.role}_cursor"])
    return net, adam


def train(natural: Sequence[Tensor], paintings: Sequence[Tensor], encoder: EncoderSpec,
          net: InverseNetSpec, config: Optional[TrainConfig] = None,
          checkpoint_path: Optional[str] = None, resume: bool = False) -> TrainReport:
    """
    Trains a copy of `net` with Adam; the encoder is never modified. With a
    checkpoint path, the net and the full training state are saved every
    checkpoint_every steps and at the end, and `resume` continues from them.
    """
    config = (config or TrainConfig()).validate()
    check_pairing(net, encoder)
    checkpoint_every = config.checkpoint_every or get_settings()["checkpoint_every"]
    rng = make_rng(config.seed)

    natural_train, natural_held = split_holdout(natural, config.validation_fraction, rng) if natural else ([], [])
    painting_train, painting_held = (
        split_holdout(paintings, config.validation_fraction, rng) if paintings else ([], [])
    )
    natural_pool = ImagePool(natural_train, "natural", rng)
    painting_pool = ImagePool(painting_train, "painting", rng)
    for pool, need in ((natural_pool, config.n_natural), (painting_pool, config.n_painting)):
        if len(pool) < need:
            raise EmptyPoolError(f"The {pool.role} pool has {len(pool)} training images, needs {need}.")
    validation = build_validation_set(natural_held, painting_held, encoder, config.swap_config,
                                      config.validation_pairs)

    def adam_for(model: InverseNetSpec) -> Adam:
        return Adam(parameters(model), lr=config.learning_rate)

    progress = _Progress()
    pools = (natural_pool, painting_pool)
    if resume:
        if not checkpoint_path:
            raise ConfigError("Resuming needs a checkpoint path.")
        net, adam = _load_checkpoint(checkpoint_path, adam_for, progress, pools, rng)
        check_pairing(net, encoder)
        logger.info("---TRAIN: resumed at step %d, epoch %d---", progress.step, progress.epoch)
    else:
        net = copy.deepcopy(net)
        adam = adam_for(net)

    report = TrainReport([], [], [], net)
    last_checkpoint: Optional[str] = checkpoint_path if resume else None
    params = parameters(net)

    def checkpoint() -> None:
        nonlocal last_checkpoint
        if checkpoint_path:
            _save_checkpoint(checkpoint_path, net, adam, progress, pools, rng)
            last_checkpoint = checkpoint_path
            report.checkpoints.append(checkpoint_path)

    def validate() -> None:
        if not validation.real:
            return
        real, swapped = validation_losses(validation, net, encoder, config.lambda_tv, config.workers)
        report.validation.append(ValidationRecord(progress.step, real, swapped))
        logger.info("---VALIDATE: step %d real %.6g swapped %.6g---", progress.step, real, swapped)

    while progress.epoch < config.epochs:
        if config.max_steps is not None and progress.step >= config.max_steps:
            break
        try:
            batch = make_minibatch(natural_pool, painting_pool, encoder, config.swap_config, rng,
                                   config.n_natural, config.n_painting, config.n_swapped)
        except PoolExhaustedError:
            natural_pool.reshuffle()
            painting_pool.reshuffle()
            progress.epoch += 1
            logger.info("---TRAIN: epoch %d done at step %d---", progress.epoch, progress.step)
            continue
        loss, grads = inversion_loss(batch, net, encoder, config.lambda_tv, config.workers)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"Training loss diverged at step {progress.step + 1} (loss={loss}).", last_checkpoint
            )
        adam.step(params, flatten_grads(grads))
        progress.step += 1
        report.steps.append(StepRecord(progress.step, progress.epoch, loss))
        if progress.step % config.log_every == 0:
            logger.info("---TRAIN: step %d epoch %d loss %.6g---", progress.step, progress.epoch, loss)
        if progress.step % config.validate_every == 0:
            validate()
        if progress.step % checkpoint_every == 0:
            checkpoint()

    if not report.validation or report.validation[-1].step != progress.step:
        validate()
    if not report.checkpoints or progress.step % checkpoint_every != 0:
        checkpoint()
    return report


def feedforward_stylize(content: Tensor, style: Tensor, encoder: EncoderSpec, net: InverseNetSpec,
                        swap_config: Optional[SwapConfig] = None) -> Tensor:
    check_pairing(net, encoder)
    content_acts, _ = encode(content, encoder)
    style_acts, _ = encode(style, encoder)
    return invert(style_swap(content_acts, style_acts, swap_config or SwapConfig()), net)
