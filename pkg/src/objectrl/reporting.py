"""Figure rendering for the CLI report paths.

Every CLI command that writes delimited output also drops a PNG next to it:
training curves from the curve CSV rows, TP-Score bars from eval reports.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport


def plot_learning_curve(curve: list[dict], png_path) -> None:
    """Per-episode return (faint) with its 30-episode moving average (bold)."""
    episodes = [row["episode"] for row in curve]
    rewards = [row["reward"] for row in curve]
    moving = [row["moving_avg_30"] for row in curve]
    eps = [row["explore_eps"] for row in curve]

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(episodes, rewards, color="tab:blue", alpha=0.15, linewidth=0.5, label="return")
    ax.plot(episodes, moving, color="tab:blue", linewidth=1.8, label="moving avg (30)")
    ax.set_xlabel("episode")
    ax.set_ylabel("episodic return")
    ax.set_ylim(-1.1, 1.1)
    ax.grid(alpha=0.3)

    ax_eps = ax.twinx()
    ax_eps.plot(episodes, eps, color="tab:orange", linewidth=1.0, label="explore eps")
    ax_eps.set_ylabel("exploration epsilon")
    ax_eps.set_ylim(0, 1.05)

    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax_eps.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(png_path), dpi=120)
    plt.close(fig)


def plot_tp_scores(reports: dict[str, EvalReport], png_path) -> None:
    """Grouped bars of TP-Score(k) for one or more labelled reports."""
    if not reports:
        raise ValueError("need at least one report to plot")
    k_max = max(report.tp_table.k_max for report in reports.values())
    ks = list(range(1, k_max + 1))
    width = 0.8 / len(reports)

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, (label, report) in enumerate(reports.items()):
        counts = [report.tp_table[k] if k <= report.tp_table.k_max else 0 for k in ks]
        positions = [k + (i - (len(reports) - 1) / 2) * width for k in ks]
        bars = ax.bar(positions, counts, width=width, label=label)
        ax.bar_label(bars, fontsize=7)
    ax.set_xticks(ks)
    ax.set_xlabel("k")
    ax.set_ylabel("images gaining >= k true positives")
    ax.grid(axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(png_path), dpi=120)
    plt.close(fig)
