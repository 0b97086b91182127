"""Figure rendering for the CLI report paths (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import PRCurve
from .stratify import SplitQualityReport


def plot_pr_curves(curves: list[PRCurve], path: str | Path, title: str = "Precision-recall") -> None:
    """One figure, one precision-recall line per label."""
    fig, ax = plt.subplots(figsize=(7, 5.5))
    for curve in curves:
        recalls = [pt[2] for pt in curve.points]
        precisions = [pt[1] for pt in curve.points]
        ax.plot(recalls, precisions, label=curve.label, linewidth=1.2)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_split_quality(
    report: SplitQualityReport, subset_names: list[str], path: str | Path
) -> None:
    """Grouped bars of per-label ratio deviation, one group per subset."""
    labels = list(report.deviations)
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels) + 2), 4.5))
    width = 0.8 / max(1, len(subset_names))
    for si, name in enumerate(subset_names):
        xs = [i + si * width for i in range(len(labels))]
        ys = [report.deviations[lab][name] for lab in labels]
        ax.bar(xs, ys, width=width, label=name)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(labels))])
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("|actual - target| fraction")
    ax.set_title(f"Split quality (max {report.max_deviation:.3f}, mean {report.mean_deviation:.3f})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
