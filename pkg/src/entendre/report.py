"""Figure rendering for CLI reports.

Every CLI path that writes a delimited report can also render a figure
next to it: the flag report gets a score histogram, training gets a
feature-importance chart, tuning gets a convergence trace, and the
network export gets a drawn graph that mirrors the GEXF (red automated
cluster, blue organic accounts, positions from the layout).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

RED = "#d62728"
BLUE = "#1f77b4"


def score_histogram(scores: list[float], threshold: float, path: str | Path) -> Path:
    """Distribution of heuristic scores with the decision threshold marked."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(scores, bins=20, range=(0.0, 1.0), color=BLUE, edgecolor="white")
    ax.axvline(threshold, color=RED, linestyle="--", linewidth=1.5,
               label=f"threshold = {threshold:g}")
    ax.set_xlabel("heuristic score")
    ax.set_ylabel("accounts")
    ax.set_title("Heuristic score distribution")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def importance_chart(names: list[str], values, path: str | Path) -> Path:
    """Horizontal bars, most important feature on top."""
    path = Path(path)
    order = sorted(range(len(names)), key=lambda i: values[i])
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(names) + 1.5))
    ax.barh([names[i] for i in order], [values[i] for i in order], color=BLUE)
    ax.set_xlabel("mean impurity decrease (normalized)")
    ax.set_title("Feature importance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def tune_trace(objectives: list[float], best_so_far: list[float], path: str | Path) -> Path:
    """Per-trial objective scatter with the running best overlaid."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = list(range(len(objectives)))
    ax.plot(xs, objectives, "o", color=BLUE, alpha=0.6, label="trial objective")
    ax.plot(xs, best_so_far, color=RED, drawstyle="steps-post", label="best so far")
    ax.set_xlabel("trial")
    ax.set_ylabel("objective")
    ax.set_title("Tuning convergence")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def network_figure(doc: dict, path: str | Path) -> Path:
    """Render a network document (export_json shape) to an image."""
    path = Path(path)
    nodes = doc["nodes"]
    pos = {n["id"]: (n["x"], n["y"]) for n in nodes}
    fig, ax = plt.subplots(figsize=(8, 8))
    segments = []
    seg_colors = []
    for e in doc["edges"]:
        if e["source"] in pos and e["target"] in pos:
            segments.append([pos[e["source"]], pos[e["target"]]])
            seg_colors.append(RED if e["color"] == "red" else BLUE)
    if segments:
        ax.add_collection(LineCollection(segments, colors=seg_colors,
                                         linewidths=0.5, alpha=0.4, zorder=1))
    # Node size tracks centrality so hubs stand out like in the viewer.
    cmax = max((n["centrality"] for n in nodes), default=0.0) or 1.0
    xs = [n["x"] for n in nodes]
    ys = [n["y"] for n in nodes]
    sizes = [10 + 90 * (n["centrality"] / cmax) for n in nodes]
    node_colors = [RED if n["color"] == "red" else BLUE for n in nodes]
    ax.scatter(xs, ys, s=sizes, c=node_colors, zorder=2, linewidths=0)
    ax.set_aspect("equal")
    ax.set_axis_off()
    ax.set_title("Engagement network (red = automated exposure)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
