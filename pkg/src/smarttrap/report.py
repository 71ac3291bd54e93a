"""Heatmap report: per-zoom raster, GeoJSON, HTML and figure, plus a CSV summary."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

from . import heatmap, plotting

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("zoom", "cell_size_m", "nx", "ny", "blur_m", "messages", "total_count",
                  "kernel_mass", "raw_sum", "spill", "nonzero_cells", "max_raw")


def export_heatmaps(messages, out_dir, zooms=tuple(heatmap.ZOOM_PRESETS), blur=None, opacity=0.6,
                    bounds=None, figures=True) -> dict:
    """Write all artifacts into ``out_dir``; returns {"files": [...], "rows": [...]}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    messages = list(messages)
    if not messages:
        log.warning("no captures in source; writing all-zero heatmaps")
    points = [(m.latitude, m.longitude) for m in messages]
    files, rows, panels = [], [], []
    for zoom in zooms:
        cfg = heatmap.RenderConfig(zoom_preset=zoom, blur_radius=blur, opacity=opacity)
        grid = heatmap.aggregate(messages, cfg, bounds)
        png = heatmap.encode_png(heatmap.render_raster(grid, cfg))
        stem = out / f"heatmap_{zoom}"
        targets = {
            ".png": png,
            ".geojson": heatmap.dumps_geojson(heatmap.export_geojson(grid)).encode("utf-8"),
            ".html": heatmap.export_html(grid, cfg, png).encode("utf-8"),
        }
        for suffix, data in targets.items():
            path = stem.with_suffix(suffix)
            path.write_bytes(data)
            files.append(path)
        if figures:
            fig_path = out / f"heatmap_{zoom}_figure.png"
            plotting.save_figure(plotting.heat_figure(grid, cfg, points), fig_path)
            files.append(fig_path)
        panels.append((grid, cfg))
        rows.append({
            "zoom": zoom,
            "cell_size_m": f"{grid.cell_size:.4f}",
            "nx": grid.nx,
            "ny": grid.ny,
            "blur_m": f"{grid.blur_radius:.4f}",
            "messages": len(messages),
            "total_count": grid.total_count,
            "kernel_mass": f"{grid.kernel_mass:.9f}",
            "raw_sum": f"{grid.raw.sum():.9f}",
            "spill": f"{grid.spill:.9f}",
            "nonzero_cells": int((grid.raw > 0).sum()),
            "max_raw": f"{grid.raw.max(initial=0.0):.9f}",
        })
    if figures and panels:
        path = out / "zoom_panels.png"
        plotting.save_figure(plotting.zoom_panels(panels, points), path)
        files.append(path)
    summary = out / "summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    files.append(summary)
    return {"files": files, "rows": rows}
