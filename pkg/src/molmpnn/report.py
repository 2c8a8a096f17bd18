"""Matplotlib figures written next to the delimited outputs of each command."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def loss_curves(histories: dict[str, tuple[list[float], list[float]]],
                path: Path) -> None:
    """One panel per seed: train and validation loss per epoch."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, (train, val) in histories.items():
        epochs = range(1, len(train) + 1)
        ax.plot(epochs, train, lw=1.2, label=f"{label} train")
        ax.plot(epochs, val, lw=1.2, ls="--", label=f"{label} val")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss per graph")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def metric_bars(aggregate: dict[str, dict], path: Path) -> None:
    """Aggregate metric means with 95% margin-of-error whiskers."""
    names = list(aggregate.keys())
    means = [aggregate[n]["mean"] for n in names]
    moes = [aggregate[n]["moe95"] for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, means, yerr=moes, capsize=5, color="#4878d0")
    ax.set_ylabel("score")
    ax.set_ylim(0, max(1.0, max(m + e for m, e in zip(means, moes)) * 1.05))
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def pareto_scatter(trials: list, path: Path, score_name: str = "F1") -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    alive = [t for t in trials if not t.pruned]
    front = [t for t in alive if t.pareto]
    rest = [t for t in alive if not t.pareto]
    if rest:
        ax.scatter([t.loss_gap for t in rest], [t.score for t in rest],
                   s=22, c="#999999", label="dominated")
    if front:
        ax.scatter([t.loss_gap for t in front], [t.score for t in front],
                   s=34, c="#d65f5f", label="Pareto front")
    ax.set_xlabel("|val loss − train loss|")
    ax.set_ylabel(f"validation {score_name}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def ranking_chart(ranking: list[dict], path: Path) -> None:
    """Cumulative selection points per feature, most important on top."""
    rows = sorted(ranking, key=lambda r: r["cumulative_points"])
    names = [r["feature"] for r in rows]
    pts = [r["cumulative_points"] for r in rows]
    colors = ["#4878d0" if r["retained"] else "#d65f5f" for r in rows]
    fig, ax = plt.subplots(figsize=(6, 0.38 * len(rows) + 1.6))
    ax.barh(names, pts, color=colors)
    ax.set_xlabel("cumulative rank points (red = eliminated)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def cluster_histogram(sizes: list[int], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(sizes, bins=min(30, max(len(set(sizes)), 3)), color="#4878d0")
    ax.set_xlabel("cluster size")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def ablation_bars(arms: dict[str, dict], metric: str, path: Path) -> None:
    """Fig-4-style comparison of the 2D / 3D / noisy-3D arms."""
    names = list(arms.keys())
    means = [arms[n]["mean"] for n in names]
    moes = [arms[n].get("moe95", 0.0) for n in names]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.bar(names, means, yerr=moes, capsize=5,
           color=["#4878d0", "#6acc64", "#d65f5f"][:len(names)])
    ax.set_ylabel(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
