"""Static figures for experiment reports.

Each renderer draws one matplotlib figure and writes it next to the
experiment's CSV output (SVG by default).  Figures are documentation of a
run, never inputs to any check.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.figsize"] = (6.0, 3.7)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.spines.top"] = False
plt.rcParams["axes.spines.right"] = False
plt.rcParams["svg.hashsalt"] = "ergovar"  # deterministic svg ids


def _finish(fig, ax, path, title):
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})  # drop timestamp for stable bytes
    plt.close(fig)
    return path


def scan_growth_figure(path, n_grid, estimates, title):
    """Estimate-vs-n lines, one per seed, on log-log axes."""
    fig, ax = plt.subplots()
    for row in np.asarray(estimates):
        ax.plot(n_grid, row, color="tab:blue", alpha=0.25, lw=0.8)
    ax.plot(n_grid, np.median(estimates, axis=0), color="tab:red", lw=2.0, label="median")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("path length n")
    ax.set_ylabel("batch-means estimate")
    ax.legend(frameon=False)
    return _finish(fig, ax, path, title)


def replicate_hist_figure(path, values, reference, title, xlabel):
    """Histogram of replicate statistics with a reference line."""
    fig, ax = plt.subplots()
    ax.hist(np.asarray(values), bins=30, color="tab:blue", alpha=0.8)
    if reference is not None:
        ax.axvline(reference, color="tab:red", lw=1.5, label=f"reference {reference:g}")
        ax.legend(frameon=False)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("replicates")
    return _finish(fig, ax, path, title)


def residual_figure(path, residuals, tolerance, title):
    """Per-case residuals on a log scale against the tolerance line."""
    residuals = np.maximum(np.asarray(residuals, dtype=float), 1e-18)
    fig, ax = plt.subplots()
    ax.semilogy(np.arange(1, len(residuals) + 1), residuals, "o", ms=3.5, color="tab:blue")
    ax.axhline(tolerance, color="tab:red", lw=1.2, label=f"tolerance {tolerance:g}")
    ax.set_xlabel("case")
    ax.set_ylabel("residual")
    ax.legend(frameon=False)
    return _finish(fig, ax, path, title)


def series_figure(path, x, series, title, xlabel, ylabel, logy=False):
    """Named series over a common x axis."""
    fig, ax = plt.subplots()
    for label, y in series.items():
        ax.plot(x, y, marker="o", ms=2.5, lw=1.0, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    return _finish(fig, ax, path, title)


def bounds_figure(path, labels, lowers, values, uppers, title):
    """Values with their lower/upper envelopes across a set of cases."""
    x = np.arange(len(labels))
    fig, ax = plt.subplots()
    ax.plot(x, lowers, "v", color="tab:gray", label="lower")
    ax.plot(x, uppers, "^", color="tab:gray", label="upper")
    ax.plot(x, values, "o", color="tab:blue", label="value")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.legend(frameon=False)
    return _finish(fig, ax, path, title)
