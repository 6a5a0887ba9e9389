#!/usr/bin/env python3
"""
StyleSwap - command-line interface
Patch-based style transfer: swap, stylize (optimization), train-inverse, feedforward, bench.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

from src.styleswap.config import get_settings, worker_count
from src.styleswap.core.bench import BENCH_MODES, CSV_HEADER, run_benchmark
from src.styleswap.core.encoder import encoder_from_name, resolve_encoder
from src.styleswap.core.inverse_net import InverseNetSpec, TrainConfig, build_inverse_for, train
from src.styleswap.core.io_formats import (
    enumerate_dataset,
    load_image,
    load_weights,
    save_activations,
    save_image,
    write_csv,
)
from src.styleswap.core.optim import OptimConfig, consistency_experiment
from src.styleswap.core.style_swap import SwapConfig
from src.styleswap.core.synthetic import synthetic_pools
from src.styleswap.errors import DivergenceError, PairingError
from src.styleswap.graph import run_pipeline

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


# ANSI color codes for better terminal output
class Colors:
    HEADER = '\033[95m'
    BLUE = '\033[94m'
    CYAN = '\033[96m'
    GREEN = '\033[92m'
    YELLOW = '\033[93m'
    RED = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


def print_banner(command: str):
    """Display the application banner."""
    print(f"{Colors.CYAN}{Colors.BOLD}== StyleSwap :: {command} =={Colors.ENDC}")


def print_stats(stats: dict):
    for key, value in stats.items():
        print(f"{Colors.YELLOW}  {key}: {value}{Colors.ENDC}")


def print_done(message: str):
    print(f"{Colors.GREEN}✓ {message}{Colors.ENDC}")


# ---------------------------------------------------------------- parsers

def _add_swap_flags(parser: argparse.ArgumentParser, with_encoder: bool = True):
    parser.add_argument("--content", help="content image (PNG or PPM)")
    parser.add_argument("--style", required=True, help="style image (PNG or PPM)")
    parser.add_argument("--out", required=True, help="output file, or directory with --frames")
    if with_encoder:
        parser.add_argument("--encoder", default="identity",
                            help="identity | tiny | tiny:N | vgg19 | file:PATH (default: identity)")
    parser.add_argument("--encoder-seed", type=int, default=0, help="seed for randomly initialized encoders")
    parser.add_argument("--patch-size", type=int, default=3)
    parser.add_argument("--stride", type=int, default=1)
    parser.add_argument("--average-ties", action="store_true",
                        help="average all tied style patches instead of taking the lowest index")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="styleswap", description="Patch-based style swap style transfer.")
    sub = parser.add_subparsers(dest="command", required=True)

    swap = sub.add_parser("swap", help="style-swap activations and write them out")
    _add_swap_flags(swap)

    stylize = sub.add_parser("stylize", help="recover the stylized image by optimization")
    _add_swap_flags(stylize)
    stylize.add_argument("--tv-weight", type=float, default=1e-6)
    stylize.add_argument("--iters", type=int, default=100)
    stylize.add_argument("--lr", type=float, default=0.05)
    stylize.add_argument("--init", choices=("content", "random"), default="content")
    stylize.add_argument("--seed", type=int, default=0)
    stylize.add_argument("--report", help="per-iteration loss CSV")
    stylize.add_argument("--runs", type=int, default=1,
                         help="K >= 2 runs the consistency experiment from K random inits")
    stylize.add_argument("--plot", help="PNG plot of the loss (and std-dev) series")
    stylize.add_argument("--frames", help="stylize every image in this directory as content")

    trainer = sub.add_parser("train-inverse", help="train an inverse network")
    trainer.add_argument("--natural", help="folder of natural images")
    trainer.add_argument("--paintings", help="folder of paintings")
    trainer.add_argument("--synthetic", type=int, default=0,
                         help="use N seeded synthetic images instead of folders")
    trainer.add_argument("--encoder", required=True)
    trainer.add_argument("--encoder-seed", type=int, default=0)
    trainer.add_argument("--out", required=True, help="checkpoint path (weight file)")
    trainer.add_argument("--epochs", type=int, default=2)
    trainer.add_argument("--lr", type=float, default=1e-3)
    trainer.add_argument("--tv-weight", type=float, default=1e-6)
    trainer.add_argument("--image-size", type=int, default=256)
    trainer.add_argument("--seed", type=int, default=0)
    trainer.add_argument("--patch-size", type=int, default=3)
    trainer.add_argument("--no-augment", action="store_true", help="train without style-swapped activations")
    trainer.add_argument("--resume", action="store_true", help="continue from --out and its state file")
    trainer.add_argument("--max-steps", type=int)
    trainer.add_argument("--checkpoint-every", type=int)
    trainer.add_argument("--validate-every", type=int, default=50)
    trainer.add_argument("--report", help="per-step loss CSV")
    trainer.add_argument("--plot", help="PNG plot of training and validation loss")

    feed = sub.add_parser("feedforward", help="stylize with a trained inverse network")
    _add_swap_flags(feed, with_encoder=False)
    feed.add_argument("--net", required=True, help="inverse network checkpoint")
    feed.add_argument("--encoder", help="encoder the net was trained for (default: inferred from the net)")
    feed.add_argument("--frames", help="stylize every image in this directory as content")

    bench = sub.add_parser("bench", help="time the pipeline phases")
    bench.add_argument("--mode", choices=BENCH_MODES, required=True)
    bench.add_argument("--sizes", required=True, help="comma-separated image sizes")
    bench.add_argument("--out", required=True, help="CSV output")
    bench.add_argument("--encoder", default="identity")
    bench.add_argument("--encoder-seed", type=int, default=0)
    bench.add_argument("--fixed-size", type=int, default=64)
    bench.add_argument("--patch-size", type=int, default=3)
    bench.add_argument("--stride", type=int, default=1)
    bench.add_argument("--optimize-iters", type=int, default=0,
                       help="time N optimization iterations instead of the inverse network")
    bench.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------- commands

def _swap_config(args) -> SwapConfig:
    return SwapConfig(
        patch_size=args.patch_size,
        stride=getattr(args, "stride", 1),
        average_ties=getattr(args, "average_ties", False),
    ).validate()


def _frame_paths(args) -> List[str]:
    if args.frames:
        os.makedirs(args.out, exist_ok=True)
        return enumerate_dataset(args.frames, role="frames").paths
    if not args.content:
        raise ValueError("Please pass --content (or --frames DIR).")
    return [args.content]


def _frame_output(args, content_path: str) -> str:
    if not args.frames:
        return args.out
    stem = os.path.splitext(os.path.basename(content_path))[0]
    return os.path.join(args.out, f"{stem}.png")


def _run_frames(args, stylize_one) -> None:
    paths = _frame_paths(args)
    if len(paths) == 1:
        stylize_one(paths[0], _frame_output(args, paths[0]))
        return
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        list(pool.map(lambda path: stylize_one(path, _frame_output(args, path)), paths))
    print_done(f"{len(paths)} frames written to {args.out}")


def cmd_swap(args) -> int:
    encoder = resolve_encoder(args.encoder, args.encoder_seed)
    if not args.content:
        raise ValueError("Please pass --content.")
    content, style = load_image(args.content), load_image(args.style)
    state = run_pipeline("swap", content, style, encoder, _swap_config(args))
    result = state["swap_result"]
    if state["image"] is not None:
        save_image(args.out, state["image"])
    elif not args.out.lower().endswith(".npy"):
        raise ValueError(
            f"Encoder '{encoder.name}' yields activations, not an image; please pass an --out path ending in .npy."
        )
    else:
        save_activations(args.out, result.activations)
    print_stats(result.stats())
    print_done(f"Swapped activations written to {args.out}")
    return EXIT_OK


def _optim_config(args) -> OptimConfig:
    return OptimConfig(
        lambda_tv=args.tv_weight,
        max_iters=args.iters,
        step_size=args.lr,
        init=args.init,
        seed=args.seed,
    ).validate()


def _write_report(path: Optional[str], report) -> None:
    if path:
        header, rows = report.csv_rows()
        write_csv(path, header, rows)


def _plot(path: Optional[str], report, plot_fn_name: str) -> None:
    if path:
        from src.styleswap.core import plots

        getattr(plots, plot_fn_name)(report, path)


def cmd_stylize(args) -> int:
    if args.frames and (args.report or args.plot):
        raise ValueError("--report and --plot describe a single run; they cannot be combined with --frames.")
    encoder = resolve_encoder(args.encoder, args.encoder_seed)
    swap_config = _swap_config(args)
    optim_config = _optim_config(args)
    style = load_image(args.style)

    def stylize_one(content_path: str, out_path: str):
        content = load_image(content_path)
        if args.runs >= 2:
            report = consistency_experiment(content, style, encoder, swap_config, optim_config, args.runs)
        else:
            report = run_pipeline("optim", content, style, encoder, swap_config, optim_config)["report"]
        save_image(out_path, report.image)
        return report

    if args.frames:
        _run_frames(args, stylize_one)
        return EXIT_OK
    report = stylize_one(_frame_paths(args)[0], args.out)
    _write_report(args.report, report)
    _plot(args.plot, report, "plot_optim_report")
    print_stats({
        "iterations": len(report.records) - 1,
        "initial_loss": f"{report.records[0].total:.6g}",
        "final_loss": f"{report.records[-1].total:.6g}",
        "wall_time_s": f"{report.wall_time:.3f}",
    })
    if report.stddev is not None:
        print_stats({"stddev_initial": f"{report.stddev[0]:.6g}", "stddev_final": f"{report.stddev[-1]:.6g}"})
    print_done(f"Stylized image written to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    encoder = resolve_encoder(args.encoder, args.encoder_seed)
    if args.synthetic:
        natural, paintings = synthetic_pools(args.synthetic, args.image_size, args.seed)
    else:
        if not args.natural or not args.paintings:
            raise ValueError("Please pass --natural and --paintings folders (or --synthetic N).")
        natural = enumerate_dataset(args.natural, "natural", args.image_size).load_images()
        paintings = enumerate_dataset(args.paintings, "painting", args.image_size).load_images()
    config = TrainConfig(
        lambda_tv=args.tv_weight,
        learning_rate=args.lr,
        n_swapped=0 if args.no_augment else 4,
        epochs=args.epochs,
        swap_config=SwapConfig(patch_size=args.patch_size),
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        validate_every=args.validate_every,
        max_steps=args.max_steps,
    )
    net = build_inverse_for(encoder, args.seed)
    report = train(natural, paintings, encoder, net, config, checkpoint_path=args.out, resume=args.resume)
    _write_report(args.report, report)
    _plot(args.plot, report, "plot_train_report")
    if report.steps:
        print_stats({
            "steps": report.steps[-1].step,
            "initial_loss": f"{report.steps[0].loss:.6g}",
            "final_loss": f"{report.steps[-1].loss:.6g}",
        })
    if report.validation:
        last = report.validation[-1]
        print_stats({"val_real": f"{last.real_loss:.6g}", "val_swapped": f"{last.swapped_loss:.6g}"})
    print_done(f"Inverse network written to {args.out}")
    return EXIT_OK


def _paired_encoder(args, net: InverseNetSpec):
    if args.encoder:
        return resolve_encoder(args.encoder, args.encoder_seed)
    encoder = encoder_from_name(net.encoder_name)
    if encoder is None:
        raise PairingError(
            f"Inverse network '{net.name}' was trained for '{net.encoder_name}'; pass --encoder file:PATH."
        )
    return encoder


def cmd_feedforward(args) -> int:
    net = load_weights(args.net)
    if not isinstance(net, InverseNetSpec):
        raise PairingError(f"{args.net} holds an encoder, not an inverse network.")
    encoder = _paired_encoder(args, net)
    swap_config = _swap_config(args)
    style = load_image(args.style)

    def stylize_one(content_path: str, out_path: str):
        content = load_image(content_path)
        state = run_pipeline("feedforward", content, style, encoder, swap_config, net=net)
        save_image(out_path, state["image"])

    _run_frames(args, stylize_one)
    print_done(f"Feedforward stylization written to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        sizes = [int(token) for token in args.sizes.split(",") if token.strip()]
    except ValueError:
        raise ValueError(f"--sizes must be a comma-separated list of integers, got {args.sizes!r}.")
    encoder = resolve_encoder(args.encoder, args.encoder_seed)
    rows = run_benchmark(
        args.mode,
        sizes,
        encoder,
        fixed_size=args.fixed_size,
        swap_config=SwapConfig(patch_size=args.patch_size, stride=args.stride),
        optimize_iters=args.optimize_iters,
        seed=args.seed,
    )
    write_csv(args.out, CSV_HEADER, [row.as_list() for row in rows])
    for row in rows:
        print(f"{Colors.BLUE}  {row.size:>5} {row.phase:<10} {row.seconds:9.4f}s  "
              f"{row.style_patches} style patches{Colors.ENDC}")
    print_done(f"Benchmark written to {args.out}")
    return EXIT_OK


COMMANDS = {
    "swap": cmd_swap,
    "stylize": cmd_stylize,
    "train-inverse": cmd_train,
    "feedforward": cmd_feedforward,
    "bench": cmd_bench,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        settings = get_settings()
    except ValueError as e:
        print(f"{Colors.RED}❌ Configuration error: {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=settings["log_level"], format="%(levelname)s %(name)s: %(message)s")

    print_banner(args.command)
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as e:
        print(f"{Colors.RED}❌ Numerical failure: {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as e:
        print(f"{Colors.RED}❌ {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"{Colors.RED}❌ {e}{Colors.ENDC}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
