"""Figures for evaluation reports, written straight to files (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalReport  # noqa: E402

CLASS_COLORS = {"FAVOR": "#3b7dd8", "AGAINST": "#d8553b", "NONE": "#9a9a9a"}
# PNG metadata carries no timestamp; dropping the version keeps files comparable
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_f1_breakdown(report: EvalReport, path: str | Path, title: str = "F1 by topic and class",
                      compare: EvalReport | None = None, labels=("this run", "compare")) -> None:
    """Grouped bars of per-topic F1 for each class.

    With ``compare`` (e.g. cross-validation vs test), its bars are drawn
    hatched next to the primary ones.
    """
    topics = list(report.per_topic)
    classes = list(CLASS_COLORS)
    width = 0.8 / (len(classes) * (2 if compare else 1))
    fig, ax = plt.subplots(figsize=(max(6, 1.8 * len(topics)), 4))
    x = np.arange(len(topics))
    slot = 0
    for cls in classes:
        vals = [report.per_topic[t][cls].f1 for t in topics]
        ax.bar(x + slot * width, vals, width, color=CLASS_COLORS[cls], label=f"{cls} ({labels[0]})")
        slot += 1
        if compare is not None:
            cvals = [compare.per_topic[t][cls].f1 if t in compare.per_topic else 0 for t in topics]
            ax.bar(x + slot * width, cvals, width, color=CLASS_COLORS[cls], hatch="//",
                   alpha=0.6, label=f"{cls} ({labels[1]})")
            slot += 1
    ax.set_xticks(x + width * (slot - 1) / 2)
    ax.set_xticklabels(topics, rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("F1")
    ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_count_vs_f1(report: EvalReport, path: str | Path) -> bool:
    """Scatter FAVOR/AGAINST training counts against F1 with a fitted line.
    Returns False (and writes nothing) when no training counts are known."""
    pts = report.correlation_points()
    if len(pts) < 2:
        return False
    xs = np.array([p[0] for p in pts], dtype=float)
    ys = np.array([p[1] for p in pts])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(xs, ys, color="#333333")
    if np.ptp(xs) > 0:
        slope, icept = np.polyfit(xs, ys, 1)
        grid = np.linspace(xs.min(), xs.max(), 2)
        ax.plot(grid, slope * grid + icept, color="#d8553b")
    if report.r_squared is not None:
        ax.text(0.05, 0.92, f"$R^2$ = {report.r_squared:.2f}", transform=ax.transAxes)
    ax.set_xlabel("training examples of class")
    ax.set_ylabel("F1")
    fig.tight_layout()
    _save(fig, path)
    return True
