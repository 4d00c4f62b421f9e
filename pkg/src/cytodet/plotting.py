"""Render PR-curve figures next to the delimited report output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport

__all__ = ["render_pr_figure"]


def render_pr_figure(report: MetricsReport, path: str | Path) -> Path:
    """One figure with every evaluated class's PR curve at the report's
    PR IoU; the legend carries per-class AP50."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 6))
    for name in report.evaluated_classes:
        curve = report.pr_curves.get(name)
        if curve is None or not curve.points:
            continue
        recalls = [0.0] + [p.recall for p in curve.points]
        precisions = [1.0] + [p.precision for p in curve.points]
        ap = report.per_class[name].ap50
        ax.plot(recalls, precisions, linewidth=1.2,
                label=f"{name} (AP {ap:.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    iou = next(iter(report.pr_curves.values())).iou_threshold if report.pr_curves else 0.5
    ax.set_title(f"Precision-Recall (IoU {iou:g}, mAP50-95 {report.map_50_95:.3f})")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
