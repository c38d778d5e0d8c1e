"""Matplotlib rendering of run artifacts to PNG files.

Everything funnels through one savefig helper with a fixed backend,
size, dpi, and metadata so repeated runs of the same experiment write
byte-identical images (the determinism contract covers figures too).
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_line_plot",
    "save_field",
    "save_margin_bars",
    "save_restoration_panel",
]

_DPI = 110
_META = {"Software": "pxlaplace"}


def _finish(fig, path):
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)
    return path


def save_line_plot(path, x, series, title, xlabel="", ylabel="", logx=False):
    """One axes, several labelled curves; series is [(label, yvalues), ...]."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, y in series:
        ax.plot(np.asarray(x, dtype=float), np.asarray(y, dtype=float), marker="o", markersize=3, label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)


def save_field(path, grid, values, title, overlay=None):
    """A nodal field: curve in 1D, image in 2D.

    overlay, if given, is a second (label, values) curve for 1D plots.
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    values = np.asarray(values, dtype=float)
    if grid.ndim == 1:
        x = grid.axis_nodes(0)
        ax.plot(x, values, label="field")
        if overlay is not None:
            label, other = overlay
            ax.plot(x, np.asarray(other, dtype=float), "--", label=label)
            ax.legend(fontsize=8)
        ax.set_xlabel("x")
        ax.grid(True, alpha=0.3)
    else:
        (lo0, hi0), (lo1, hi1) = grid.bounds
        im = ax.imshow(
            values,
            origin="lower",
            extent=(lo1, hi1, lo0, hi0),
            aspect="equal",
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title)
    fig.tight_layout()
    return _finish(fig, path)


def save_margin_bars(path, report, title=None, max_items=80):
    """Per-item margins of a CheckReport as bars, failures in red."""
    items = report.items[:max_items]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if items:
        margins = [it.margin for it in items]
        colors = ["#c23b3b" if not it.passed else "#3b6fc2" for it in items]
        ax.bar(range(len(items)), margins, color=colors)
        tols = [-(it.tol if it.tol is not None else report.tolerance) for it in items]
        ax.plot(range(len(items)), tols, "k--", linewidth=0.8, label="-tolerance")
        ax.legend(fontsize=8)
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.set_xlabel(f"check item (first {len(items)} of {len(report.items)})")
    ax.set_ylabel("margin")
    ax.set_title(title or report.title)
    fig.tight_layout()
    return _finish(fig, path)


def save_restoration_panel(path, before, after, energy_trace):
    """Input image, restored image, and the energy trace side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.6))
    for ax, img, label in ((axes[0], before, "input"), (axes[1], after, "restored")):
        ax.imshow(img.values, cmap="gray", vmin=0.0, vmax=1.0, origin="upper")
        ax.set_title(label)
        ax.set_xticks([])
        ax.set_yticks([])
    axes[2].plot(np.asarray(energy_trace, dtype=float))
    axes[2].set_title("energy")
    axes[2].set_xlabel("step")
    axes[2].grid(True, alpha=0.3)
    fig.tight_layout()
    return _finish(fig, path)
