"""
Phase timings for the stylization pipeline as one image grows: encode, style
swap and decode (inverse network) or optimize. Wall-times are hardware
dependent and only ever reported.
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

from ..errors import ConfigError
from .encoder import EncoderSpec, encode
from .inverse_net import InverseNetSpec, build_inverse_for, invert
from .optim import OptimConfig, descend
from .style_swap import SwapConfig, brute_force_style_swap, run_style_swap
from .synthetic import natural_image, painting_image
from .tensor import make_rng

logger = logging.getLogger(__name__)

BENCH_MODES = ("style-size", "content-size", "matcher")
CSV_HEADER = ["size", "phase", "seconds", "style_patches"]


@dataclass
class BenchRow:
    size: int
    phase: str
    seconds: float
    style_patches: int

    def as_list(self) -> list:
        return [self.size, self.phase, f"{self.seconds:.6f}", self.style_patches]


def _timed(fn):
    started = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - started


def run_benchmark(mode: str, sizes: Sequence[int], encoder: EncoderSpec, fixed_size: int = 64,
                  swap_config: Optional[SwapConfig] = None, net: Optional[InverseNetSpec] = None,
                  optimize_iters: int = 0, seed: int = 0) -> List[BenchRow]:
    """
    style-size and content-size grow one image while the other stays
    fixed_size x fixed_size; matcher times the convolutional and the
    patch-by-patch matcher on the same activations.
    """
    if mode not in BENCH_MODES:
        raise ConfigError(f"Unsupported bench mode: {mode}. Please use one of {', '.join(BENCH_MODES)}.")
    if not sizes or any(size < 1 for size in sizes):
        raise ConfigError(f"Bench sizes must be positive, got {list(sizes)}.")
    swap_config = (swap_config or SwapConfig()).validate()
    if net is None and optimize_iters == 0:
        net = build_inverse_for(encoder, seed)
    rng = make_rng(seed)

    rows: List[BenchRow] = []
    for size in sizes:
        content_size = size if mode in ("content-size", "matcher") else fixed_size
        style_size = size if mode in ("style-size", "matcher") else fixed_size
        content = natural_image(content_size, rng)
        style = painting_image(style_size, rng)

        acts, encode_s = _timed(lambda: (encode(content, encoder)[0], encode(style, encoder)[0]))
        content_acts, style_acts = acts
        result, swap_s = _timed(lambda: run_style_swap(content_acts, style_acts, swap_config))
        patches = result.style_patches
        rows.append(BenchRow(size, "encode", encode_s, patches))

        if mode == "matcher":
            rows.append(BenchRow(size, "swap-fast", swap_s, patches))
            _, brute_s = _timed(lambda: brute_force_style_swap(content_acts, style_acts, swap_config))
            rows.append(BenchRow(size, "swap-brute", brute_s, patches))
            logger.info("---BENCH: %d fast %.4fs brute %.4fs---", size, swap_s, brute_s)
            continue

        rows.append(BenchRow(size, "swap", swap_s, patches))
        if optimize_iters:
            config = OptimConfig(max_iters=optimize_iters, log_every=max(optimize_iters, 1))
            _, decode_s = _timed(lambda: descend(result.activations, content, encoder, config))
            rows.append(BenchRow(size, "optimize", decode_s, patches))
        else:
            _, decode_s = _timed(lambda: invert(result.activations, net))
            rows.append(BenchRow(size, "decode", decode_s, patches))
        logger.info("---BENCH: %d encode %.4fs swap %.4fs decode %.4fs---", size, encode_s, swap_s, decode_s)
    return rows
