"""Figure rendering for report outputs.

Figures are rendered headless and without embedded timestamps, so the
same inputs produce the same bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .thresholds import HeatmapTable  # noqa: E402

__all__ = ["render_heatmap", "render_gap"]

_SAVE_KW = {"metadata": {"Date": None}, "dpi": 110}


def render_heatmap(table: HeatmapTable, path) -> None:
    """Success-floor grid as an image, rank up the y axis."""
    grid = np.array(table.floors).T
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis",
                   vmin=0.0)
    ax.set_xticks(range(len(table.ps)))
    ax.set_xticklabels([f"{p:g}" for p in table.ps], rotation=45,
                       fontsize=7)
    step = max(1, len(table.rs) // 12)
    ax.set_yticks(range(0, len(table.rs), step))
    ax.set_yticklabels([str(r) for r in table.rs[::step]], fontsize=7)
    ax.set_xlabel("sampling probability")
    ax.set_ylabel("rank")
    ax.set_title(f"certification floor, {table.n1} x {table.n2}")
    fig.colorbar(im, ax=ax, label="success floor")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_gap(rs, d_mins, d_maxs, path) -> None:
    """Extreme rank gaps against rank, one line each."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(rs, d_maxs, marker="o", label="largest gap")
    ax.plot(rs, d_mins, marker="s", label="smallest gap")
    ax.axhline(0.0, color="gray", linewidth=0.8, linestyle=":")
    ax.set_xlabel("true rank")
    ax.set_ylabel("estimated minus true rank")
    ax.set_title("completion rank gap")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
