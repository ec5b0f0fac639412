"""Matplotlib renderings of reports, written to files by the CLI.

The numeric modules stay plotting-free; everything here consumes their
outputs.  All functions write a file and return its path.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grid import GridLayout
from .interpret import GridReport
from .model import EmTrace


def likelihood_curve(trace: EmTrace, path: str | Path) -> Path:
    """Training log-likelihood per EM iteration."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(trace.loglik) + 1), trace.loglik, marker="o", ms=3)
    ax.set_xlabel("EM iteration")
    ax.set_ylabel("train log-likelihood")
    ax.set_title(f"{trace.iterations} iterations" + (", converged" if trace.converged else ""))
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def word_grid_figure(
    report: GridReport,
    path: str | Path,
    shading: np.ndarray | None = None,
    title: str | None = None,
) -> Path:
    """Top-word lists laid out on the class lattice, one text box per class.

    ``shading`` (one value per class, e.g. an out-of-sample posterior)
    darkens the busiest cells; values are min-max scaled.
    """
    path = Path(path)
    grid = report.grid
    n_words = max((len(c) for c in report.classes), default=1)
    fig, axes = plt.subplots(
        grid.rows,
        grid.cols,
        figsize=(1.9 * grid.cols, 0.32 * n_words * grid.rows + 0.8),
        squeeze=False,
    )
    if shading is not None:
        lo, hi = float(np.min(shading)), float(np.max(shading))
        scaled = (np.asarray(shading) - lo) / (hi - lo) if hi > lo else np.zeros(grid.n_classes)
    for index, ranked in enumerate(report.classes):
        r, c = grid.coords(index)
        ax = axes[r][c]
        ax.set_xticks([])
        ax.set_yticks([])
        if shading is not None:
            ax.set_facecolor(plt.cm.Blues(0.05 + 0.55 * scaled[index]))
        ax.text(
            0.5,
            0.98,
            "\n".join(w for w, _ in ranked),
            ha="center",
            va="top",
            fontsize=7,
            family="monospace",
            transform=ax.transAxes,
        )
        ax.set_title(str(index), fontsize=7, pad=2)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def posterior_heatmap(
    posterior: Sequence[float], grid: GridLayout, path: str | Path, title: str | None = None
) -> Path:
    """Class posterior as a heatmap over the lattice."""
    path = Path(path)
    values = np.asarray(posterior, dtype=float).reshape(grid.rows, grid.cols)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * grid.cols, 1.0 + 0.8 * grid.rows))
    image = ax.imshow(values, cmap="Blues", vmin=0.0)
    for r in range(grid.rows):
        for c in range(grid.cols):
            ax.text(c, r, f"{values[r, c]:.2f}", ha="center", va="center", fontsize=7)
    ax.set_xticks(range(grid.cols))
    ax.set_yticks(range(grid.rows))
    if title:
        ax.set_title(title, fontsize=10)
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def prediction_figure(
    ratings: Sequence[float], predictions: Sequence[float], path: str | Path
) -> Path:
    """Predicted vs. actual ratings with the identity line."""
    path = Path(path)
    ratings = np.asarray(ratings, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    jitter = (np.arange(len(ratings)) % 7 - 3) * 0.02
    ax.plot(ratings + jitter, predictions, ".", ms=4, alpha=0.4)
    lo = min(ratings.min(), predictions.min()) - 0.2
    hi = max(ratings.max(), predictions.max()) + 0.2
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("rating")
    ax.set_ylabel("prediction")
    mse = float(np.mean((predictions - ratings) ** 2))
    ax.set_title(f"MSE = {mse:.3f} over {len(ratings)} reviews")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
