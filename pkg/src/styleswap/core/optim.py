"""
Optimization-based stylization: minimize ||encode(I) - target||_F^2 + lambda * TV(I)
over the image I with Adam, where target is the style-swapped activation map.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import worker_count
from ..errors import ConfigError, DivergenceError, ShapeError
from .encoder import EncoderSpec, encode, encode_backward
from .style_swap import SwapConfig, style_swap
from .tensor import Tensor, frobenius_norm_sq, make_rng, random_uniform

logger = logging.getLogger(__name__)

INIT_MODES = ("content", "random")


class Adam:
    """Adam with bias correction; updates the parameter arrays in place."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.iter = 0

    def step(self, params: Sequence[Tensor], grads: Sequence[Tensor]) -> None:
        self.iter += 1
        correction1 = 1 - self.beta1 ** self.iter
        correction2 = 1 - self.beta2 ** self.iter
        for param, grad, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * np.square(grad)
            m_hat = m / correction1
            v_hat = v / correction2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self) -> dict:
        arrays = {"adam_iter": np.array(self.iter)}
        for index, (m, v) in enumerate(zip(self.m, self.v)):
            arrays[f"adam_m_{index}"] = m
            arrays[f"adam_v_{index}"] = v
        return arrays

    def load_state_arrays(self, arrays) -> None:
        self.iter = int(arrays["adam_iter"])
        for index in range(len(self.m)):
            self.m[index] = np.array(arrays[f"adam_m_{index}"], dtype=self.m[index].dtype)
            self.v[index] = np.array(arrays[f"adam_v_{index}"], dtype=self.v[index].dtype)


@dataclass
class OptimConfig:
    lambda_tv: float = 1e-6
    max_iters: int = 100
    step_size: float = 0.05
    init: str = "content"
    init_low: float = 0.0
    init_high: float = 1.0
    seed: int = 0
    tolerance: float = 0.0
    log_every: int = 10

    def validate(self) -> "OptimConfig":
        if self.lambda_tv < 0:
            raise ConfigError(f"lambda_tv must be >= 0, got {self.lambda_tv}.")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}.")
        if not self.step_size > 0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}.")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}, got {self.init!r}.")
        if not self.init_low < self.init_high:
            raise ConfigError("init_low must be below init_high.")
        if self.tolerance < 0:
            raise ConfigError(f"tolerance must be >= 0, got {self.tolerance}.")
        if self.log_every < 1:
            raise ConfigError(f"log_every must be >= 1, got {self.log_every}.")
        return self


@dataclass
class IterationRecord:
    iteration: int
    total: float
    act_term: float
    tv_term: float


@dataclass
class OptimReport:
    records: List[IterationRecord]
    image: Tensor
    wall_time: float
    stddev: Optional[List[float]] = None
    runs: List["OptimReport"] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [record.total for record in self.records]

    def csv_rows(self) -> Tuple[List[str], List[list]]:
        header = ["iter", "total", "act_term", "tv_term"]
        if self.stddev is not None:
            header.append("stddev")
        rows = []
        for index, record in enumerate(self.records):
            row = [record.iteration, record.total, record.act_term, record.tv_term]
            if self.stddev is not None:
                row.append(self.stddev[index])
            rows.append(row)
        return header, rows


def tv_loss(image: Tensor) -> float:
    """Anisotropic squared-difference total variation; 1 x N images use only the defined sum."""
    vertical = image[1:] - image[:-1]
    horizontal = image[:, 1:] - image[:, :-1]
    return frobenius_norm_sq(vertical) + frobenius_norm_sq(horizontal)


def tv_grad(image: Tensor) -> Tensor:
    vertical = image[1:] - image[:-1]
    horizontal = image[:, 1:] - image[:, :-1]
    grad = np.zeros_like(image)
    grad[1:] += 2 * vertical
    grad[:-1] -= 2 * vertical
    grad[:, 1:] += 2 * horizontal
    grad[:, :-1] -= 2 * horizontal
    return grad


def stylize_terms(image: Tensor, target: Tensor, spec: EncoderSpec,
                  lambda_tv: float) -> Tuple[float, float, Tensor]:
    """Returns (activation term, TV term, gradient of the full objective)."""
    activations, trace = encode(image, spec)
    if activations.shape != target.shape:
        raise ShapeError(
            f"Encoder output {activations.shape} does not match target activations {target.shape}."
        )
    residual = activations - target
    grad = encode_backward(trace, spec, 2 * residual)
    tv_term = 0.0
    if lambda_tv:
        tv_term = tv_loss(image)
        grad = grad + lambda_tv * tv_grad(image)
    return frobenius_norm_sq(residual), tv_term, grad


def stylize_loss(image: Tensor, target: Tensor, spec: EncoderSpec, lambda_tv: float) -> Tuple[float, Tensor]:
    act_term, tv_term, grad = stylize_terms(image, target, spec, lambda_tv)
    return act_term + lambda_tv * tv_term, grad


def swap_target(content: Tensor, style: Tensor, spec: EncoderSpec, swap_config: SwapConfig) -> Tensor:
    content_acts, _ = encode(content, spec)
    style_acts, _ = encode(style, spec)
    return style_swap(content_acts, style_acts, swap_config)


def initial_image(content: Tensor, config: OptimConfig, seed: Optional[int] = None) -> Tensor:
    if config.init == "content":
        return np.array(content, copy=True)
    rng = make_rng(config.seed if seed is None else seed)
    return random_uniform(content.shape, config.init_low, config.init_high, rng)


def descend(target: Tensor, init: Tensor, spec: EncoderSpec, config: OptimConfig,
            callback: Optional[Callable[[int, Tensor], None]] = None) -> OptimReport:
    """Runs Adam from `init` toward `target`; records the loss before every step and after the last."""
    config.validate()
    image = np.array(init, copy=True)
    adam = Adam([image], lr=config.step_size)
    records: List[IterationRecord] = []
    started = time.perf_counter()
    for iteration in range(config.max_iters + 1):
        act_term, tv_term, grad = stylize_terms(image, target, spec, config.lambda_tv)
        total = act_term + config.lambda_tv * tv_term
        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            raise DivergenceError(f"Stylization loss diverged at iteration {iteration} (loss={total}).")
        records.append(IterationRecord(iteration, total, act_term, tv_term))
        if callback is not None:
            callback(iteration, image)
        if iteration % config.log_every == 0 or iteration == config.max_iters:
            logger.info("---OPTIM: iter %d loss %.6g (act %.6g, tv %.6g)---",
                        iteration, total, act_term, tv_term)
        if iteration == config.max_iters:
            break
        if config.tolerance and iteration > 0:
            previous = records[-2].total
            if (previous - total) / max(abs(previous), 1e-30) < config.tolerance:
                logger.info("---OPTIM: converged at iter %d---", iteration)
                break
        adam.step([image], [grad])
    return OptimReport(records, image, time.perf_counter() - started)


def optimize(content: Tensor, style: Tensor, spec: EncoderSpec,
             swap_config: Optional[SwapConfig] = None,
             optim_config: Optional[OptimConfig] = None) -> OptimReport:
    swap_config = swap_config or SwapConfig()
    optim_config = (optim_config or OptimConfig()).validate()
    target = swap_target(content, style, spec, swap_config)
    return descend(target, initial_image(content, optim_config), spec, optim_config)


def consistency_experiment(content: Tensor, style: Tensor, spec: EncoderSpec,
                           swap_config: Optional[SwapConfig] = None,
                           optim_config: Optional[OptimConfig] = None,
                           k_runs: int = 5, seeds: Optional[Sequence[int]] = None,
                           workers: Optional[int] = None) -> OptimReport:
    """
    Optimizes from k random initializations and reports, per iteration, the
    across-run pixel standard deviation averaged over pixels.
    """
    if k_runs < 2:
        raise ConfigError(f"consistency_experiment needs k_runs >= 2, got {k_runs}.")
    swap_config = swap_config or SwapConfig()
    optim_config = optim_config or OptimConfig()
    config = OptimConfig(**{**optim_config.__dict__, "init": "random", "tolerance": 0.0}).validate()
    seeds = list(seeds) if seeds is not None else [config.seed + run for run in range(k_runs)]
    if len(seeds) != k_runs:
        raise ConfigError(f"Expected {k_runs} seeds, got {len(seeds)}.")
    target = swap_target(content, style, spec, swap_config)

    def run(seed: int) -> Tuple[OptimReport, List[Tensor]]:
        snapshots: List[Tensor] = []
        report = descend(target, initial_image(content, config, seed), spec, config,
                         callback=lambda _, image: snapshots.append(image.copy()))
        return report, snapshots

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        outcomes = list(pool.map(run, seeds))
    reports = [report for report, _ in outcomes]

    stddev = []
    for iteration in range(config.max_iters + 1):
        stacked = np.stack([snapshots[iteration] for _, snapshots in outcomes])
        stddev.append(float(np.mean(np.std(stacked, axis=0, dtype=np.float64))))

    records = []
    for iteration in range(config.max_iters + 1):
        per_run = [report.records[iteration] for report in reports]
        records.append(IterationRecord(
            iteration,
            float(np.mean([r.total for r in per_run])),
            float(np.mean([r.act_term for r in per_run])),
            float(np.mean([r.tv_term for r in per_run])),
        ))
    logger.info("---CONSISTENCY: stddev %.6g -> %.6g over %d runs---", stddev[0], stddev[-1], k_runs)
    return OptimReport(records, reports[0].image, time.perf_counter() - started, stddev, reports)
