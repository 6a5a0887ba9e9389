"""Loss and consistency curves rendered to PNG files (headless Agg backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .inverse_net import TrainReport  # noqa: E402
from .optim import OptimReport  # noqa: E402


def plot_optim_report(report: OptimReport, path: str) -> None:
    """Loss per iteration, plus the across-run pixel standard deviation when the report has one."""
    iterations = [record.iteration for record in report.records]
    panels = 2 if report.stddev is not None else 1
    fig, axes = plt.subplots(1, panels, figsize=(6 * panels, 4), squeeze=False)
    ax = axes[0][0]
    ax.plot(iterations, report.losses, label="total")
    ax.plot(iterations, [record.act_term for record in report.records], label="activation", linestyle="--")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    if report.stddev is not None:
        ax = axes[0][1]
        ax.plot(iterations, report.stddev, color="tab:red")
        ax.set_xlabel("iteration")
        ax.set_ylabel("pixel std-dev across runs")
        ax.set_title(f"{len(report.runs)} random initializations")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_train_report(report: TrainReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot([record.step for record in report.steps], report.losses, label="train", alpha=0.6)
    if report.validation:
        steps = [record.step for record in report.validation]
        ax.plot(steps, [record.real_loss for record in report.validation], marker="o", label="val real")
        ax.plot(steps, [record.swapped_loss for record in report.validation], marker="s",
                label="val style-swapped")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("inversion loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
