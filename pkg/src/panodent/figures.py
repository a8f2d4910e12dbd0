"""Figure rendering for the analysis subcommands.

Every reporting command that writes delimited output also renders a PNG
next to it: phrase-frequency bars, the frequency/MCC trend scatter, the
kappa trend scatters, and the per-condition per-group MCC bars.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import RegressionFit

_DPI = 150


def plot_frequency_bars(
    counts: Mapping[str, int],
    selected: set[str],
    path: str | Path,
    top: int = 27,
) -> Path:
    """Bar chart of the most frequent phrases; retained conditions in red."""
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:top]
    names = [name for name, _ in ranked]
    values = [count for _, count in ranked]
    colors = ["#c0392b" if name in selected else "#2980b9" for name in names]

    fig, ax = plt.subplots(figsize=(max(8, 0.45 * len(names)), 5))
    ax.bar(range(len(names)), values, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("occurrences")
    ax.set_title("Most frequent noun phrases (red = retained conditions)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)


def plot_trend(
    x: Sequence[float],
    y: Sequence[float],
    fit: RegressionFit,
    path: str | Path,
    xlabel: str,
    ylabel: str,
    point_labels: Sequence[str] | None = None,
) -> Path:
    """Scatter plot with the fitted line and its R^2 in the title."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter(x, y, color="#2980b9", zorder=3)
    if point_labels is not None:
        for xi, yi, label in zip(x, y, point_labels):
            ax.annotate(str(label), (xi, yi), fontsize=7, xytext=(3, 3),
                        textcoords="offset points")
    grid = np.linspace(x.min(), x.max(), 100)
    ax.plot(grid, fit.predict(grid.reshape(-1, 1)), color="#c0392b", zorder=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(f"{ylabel} vs {xlabel} (R² = {fit.r_squared:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)


def plot_two_regressor_fit(
    x1: Sequence[float],
    x2: Sequence[float],
    y: Sequence[float],
    fit: RegressionFit,
    path: str | Path,
    xlabel: str = "Fleiss' kappa",
) -> Path:
    """Actual vs fitted values for a two-regressor fit, plotted over x1."""
    x1 = np.asarray(x1, dtype=float)
    predicted = fit.predict(np.column_stack([x1, np.asarray(x2, dtype=float)]))
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.scatter(x1, y, color="#2980b9", label="actual", zorder=3)
    ax.scatter(x1, predicted, color="#c0392b", marker="x", label="fitted", zorder=3)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("MCC")
    ax.set_title(f"Two-regressor fit (R² = {fit.r_squared:.3f})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)


def plot_group_bars(
    per_condition: Mapping[int, Mapping[str, float]],
    path: str | Path,
    ylabel: str = "MCC",
) -> Path:
    """Grouped bars: one cluster per condition, one bar per predictor group."""
    conditions = sorted(per_condition)
    groups = sorted({g for row in per_condition.values() for g in row})
    width = 0.8 / max(1, len(groups))
    fig, ax = plt.subplots(figsize=(max(8, 0.8 * len(conditions)), 5))
    for offset, group in enumerate(groups):
        values = [per_condition[c].get(group, 0.0) for c in conditions]
        positions = [c + (offset - (len(groups) - 1) / 2) * width for c in conditions]
        ax.bar(positions, values, width=width, label=group)
    ax.set_xticks(conditions)
    ax.set_xlabel("condition")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return Path(path)
