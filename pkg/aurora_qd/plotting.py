"""
plotting.py

Static SVG figures, reproducible (fixed hash salt, no date metadata):
 - a container snapshot projected on one task's descriptor plane,
   coloured by that task's score
 - median and IQR coverage per minimum performance across runs, one
   line per variant
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from aurora_qd.core import Task, Variant

AXIS_LABELS = {
    Task.NAV: ("final x (normalized)", "final y (normalized)"),
    Task.FORW: ("actuation factor v", "actuation factor omega"),
    Task.TURN: ("final v (normalized)", "final omega (normalized)"),
}


def plot_snapshot(snapshot: pd.DataFrame, task: Task, path: str | Path) -> Path:
    task = Task(task)
    path = Path(path)
    x_label, y_label = AXIS_LABELS[task]
    variant = Variant(snapshot["variant"].iloc[0]) if not snapshot.empty else None
    foreign = variant is not None and variant.hand_coded_task not in (None, task)

    plt.rcParams["svg.hashsalt"] = "aurora-qd"
    fig, ax = plt.subplots(figsize=(5, 5))
    xs, ys = snapshot[f"bd_{task.value}_0"], snapshot[f"bd_{task.value}_1"]
    if foreign:
        # Containers built for another task carry no meaningful score here
        ax.scatter(xs, ys, s=6, color="grey")
    else:
        points = ax.scatter(xs, ys, s=6, c=snapshot[f"f_{task.value}"], cmap="viridis")
        fig.colorbar(points, ax=ax, label=f"f_{task.value}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    title = variant.value if variant is not None else "empty"
    ax.set_title(f"{title} on {task.value} ({len(snapshot)} policies)")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_compare_curves(curves: pd.DataFrame, task: Task, path: str | Path) -> Path:
    """Median coverage per minimum performance with its IQR band, per variant."""
    task = Task(task)
    path = Path(path)
    plt.rcParams["svg.hashsalt"] = "aurora-qd"
    fig, ax = plt.subplots(figsize=(6, 4))
    for variant, group in curves.groupby("variant", sort=True):
        group = group.sort_values("threshold")
        line, = ax.plot(group["threshold"], group["median"], label=f"{variant} (n={int(group['n_seeds'].max())})")
        ax.fill_between(group["threshold"], group["q25"], group["q75"], color=line.get_color(), alpha=0.25)
    ax.set_xlabel(f"minimum performance f_{task.value}")
    ax.set_ylabel("coverage (cells of 50 x 50)")
    ax.set_title(f"Coverage per minimum performance on {task.value}")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
