"""Matplotlib renderings written next to the CSV reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_entropy_vs_r(r, svden, ml_svden, path, title=None, pearson=None):
    """Exact and approximated SvdEn against the map's control parameter."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(r, svden, color="black", label="SvdEn")
        ax.plot(r, ml_svden, color="tab:red", label="ML_SvdEn", alpha=0.8)
        ax.set_xlabel("r")
        ax.set_ylabel("entropy")
        if pearson is not None:
            title = f"{title or ''} Pearson = {pearson:.3f}".strip()
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)


def plot_bifurcation(r, iterates, path, title=None):
    """Scatter of the last iterates per control value."""
    r = np.asarray(r)
    iterates = np.asarray(iterates)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        rr = np.repeat(r, iterates.shape[1])
        ax.plot(rr, iterates.ravel(), ",", color="black", alpha=0.4)
        ax.set_xlabel("r")
        ax.set_ylabel("x")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_map(grid, path, title=None, cmap="viridis"):
    """Entropy map as a colour image; NaN cells are left blank."""
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(4.5, 4))
        im = ax.imshow(np.ma.masked_invalid(grid), cmap=cmap, interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_r2_scores(names, scores, path, title=None):
    """Per-image R^2 with the mean drawn as a horizontal line."""
    scores = np.asarray(scores, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(scores) + 2), 3))
        ax.plot(range(len(scores)), scores, "o", color="tab:blue")
        ax.axhline(scores.mean(), color="tab:red", linestyle="--", label="mean")
        ax.set_xticks(range(len(scores)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
        ax.set_ylabel("R$^2$")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        _save(fig, path)
