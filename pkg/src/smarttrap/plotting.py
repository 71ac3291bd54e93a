"""Matplotlib figures for the heatmap report.

Uses the object-oriented ``Figure`` API (no pyplot state) so figures can be
built from any thread, and strips PNG metadata so output bytes are stable.
"""

from __future__ import annotations

import math
import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.colors import LinearSegmentedColormap
from matplotlib.figure import Figure

from .heatmap import RAMP, HeatGrid, RenderConfig

PNG_METADATA = {"Software": None}
RC = {"font.size": 9, "axes.titlesize": 10, "axes.labelsize": 9}


def ramp_cmap() -> LinearSegmentedColormap:
    return LinearSegmentedColormap.from_list(
        "capture_ramp", [(p, tuple(v / 255 for v in c)) for p, c in RAMP]
    )


def _extent(grid: HeatGrid):
    b = grid.bounds
    return (b.min_lon, b.max_lon, b.min_lat, b.max_lat)


def _draw(ax, grid: HeatGrid, config: RenderConfig, points=None):
    inten = grid.intensity
    masked = np.ma.masked_where(inten <= 0, inten)
    ax.set_facecolor("#e8efe4")
    im = ax.imshow(masked, origin="lower", extent=_extent(grid), cmap=ramp_cmap(), vmin=0.0, vmax=1.0,
                   alpha=config.opacity, interpolation="nearest",
                   aspect=1.0 / math.cos(math.radians(grid.bounds.center_lat)))  # equal metres on both axes
    if points is not None and len(points):
        pts = np.asarray(points, dtype=float)
        ax.scatter(pts[:, 1], pts[:, 0], s=4, c="#b00000", linewidths=0, label="capture")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.ticklabel_format(useOffset=False, style="plain")
    ax.tick_params(axis="x", labelrotation=30)
    return im


def save_figure(fig: Figure, path: str | os.PathLike) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)


def heat_figure(grid: HeatGrid, config: RenderConfig, points=None) -> Figure:
    import matplotlib

    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(6.4, 4.8))
        ax = fig.add_subplot(1, 1, 1)
        im = _draw(ax, grid, config, points)
        ax.set_title(f"zoom {config.zoom}: cell {grid.cell_w_m:.1f} m, blur {grid.blur_radius:.1f} m, "
                     f"{grid.total_count} captures")
        fig.colorbar(im, ax=ax, label="normalised intensity")
        fig.tight_layout()
    return fig


def zoom_panels(grids: list[tuple[HeatGrid, RenderConfig]], points=None) -> Figure:
    """Side-by-side panels, one per zoom preset."""
    import matplotlib

    with matplotlib.rc_context(RC):
        n = len(grids)
        fig = Figure(figsize=(4.2 * n, 4.0))
        fig.subplots_adjust(left=0.06, right=0.88, wspace=0.45, bottom=0.2)
        im = None
        for i, (grid, config) in enumerate(grids):
            ax = fig.add_subplot(1, n, i + 1)
            im = _draw(ax, grid, config, points)
            ax.set_title(f"zoom {config.zoom}")
            if i:
                ax.set_ylabel("")
        if im is not None:
            fig.colorbar(im, ax=fig.axes, label="normalised intensity", shrink=0.8)
    return fig
