"""Capture-density grids and their static renderings.

Each capture deposits ``captured_count`` times an unnormalised Gaussian
(peak 1, sigma = blur_radius / 2, cut at 3 sigma) onto a lat/lon cell grid.
Mass falling outside the grid is tallied in ``HeatGrid.spill`` so that

    raw.sum() + spill == sum(captured_count) * kernel_mass

holds exactly up to float rounding.
"""

from __future__ import annotations

import base64
import html
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .geo import M_PER_DEG_LAT, Bounds, ground_resolution, m_per_deg_lon

ZOOM_PRESETS = {"z13": 13, "z14": 14, "z15": 15, "z16": 16}
DEFAULT_BLUR_PX = 6

# (position, RGBA); alpha of the rendered cell is opacity * intensity, the
# ramp alpha only marks the transparent low end
RAMP = (
    (0.0, (0, 0, 255, 0)),
    (0.25, (0, 0, 255, 255)),
    (0.5, (0, 255, 0, 255)),
    (0.75, (255, 255, 0, 255)),
    (1.0, (255, 0, 0, 255)),
)


@dataclass(frozen=True)
class RenderConfig:
    zoom_preset: str = "z16"
    blur_radius: float | None = None  # metres; None -> DEFAULT_BLUR_PX map pixels at this zoom
    opacity: float = 0.6

    def __post_init__(self):
        if self.zoom_preset not in ZOOM_PRESETS:
            raise ValueError(f"zoom_preset must be one of {sorted(ZOOM_PRESETS)}, got {self.zoom_preset!r}")
        if self.blur_radius is not None and self.blur_radius < 0:
            raise ValueError("blur_radius must be >= 0")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")

    @property
    def zoom(self) -> int:
        return ZOOM_PRESETS[self.zoom_preset]

    def cell_size(self, lat: float) -> float:
        return ground_resolution(lat, self.zoom)

    def blur(self, lat: float) -> float:
        if self.blur_radius is not None:
            return self.blur_radius
        return DEFAULT_BLUR_PX * self.cell_size(lat)


@dataclass
class HeatGrid:
    bounds: Bounds
    cell_size: float  # requested cell edge, metres
    raw: np.ndarray  # (ny, nx); row 0 is the southernmost row
    spill: float = 0.0
    kernel_mass: float = 1.0
    total_count: int = 0
    blur_radius: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def ny(self) -> int:
        return self.raw.shape[0]

    @property
    def nx(self) -> int:
        return self.raw.shape[1]

    @property
    def dlat(self) -> float:
        return (self.bounds.max_lat - self.bounds.min_lat) / self.ny

    @property
    def dlon(self) -> float:
        return (self.bounds.max_lon - self.bounds.min_lon) / self.nx

    @property
    def cell_w_m(self) -> float:
        return self.dlon * m_per_deg_lon(self.bounds.center_lat)

    @property
    def cell_h_m(self) -> float:
        return self.dlat * M_PER_DEG_LAT

    @property
    def intensity(self) -> np.ndarray:
        peak = self.raw.max(initial=0.0)
        if peak <= 0:
            return np.zeros_like(self.raw)
        return self.raw / peak

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        """(row, col), clamped so points on the north/east edge land in the last cell."""
        b = self.bounds
        row = min(int(math.floor((lat - b.min_lat) / self.dlat)), self.ny - 1) if self.dlat > 0 else 0
        col = min(int(math.floor((lon - b.min_lon) / self.dlon)), self.nx - 1) if self.dlon > 0 else 0
        return row, col

    def cell_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        """(west, south, east, north) of one cell."""
        b = self.bounds
        return (b.min_lon + col * self.dlon, b.min_lat + row * self.dlat,
                b.min_lon + (col + 1) * self.dlon, b.min_lat + (row + 1) * self.dlat)


def kernel(sigma: float, cell_w: float, cell_h: float) -> tuple[np.ndarray, int, int]:
    """Truncated Gaussian stencil on the cell lattice; returns (weights, ry, rx)."""
    if sigma <= 0:
        return np.ones((1, 1)), 0, 0
    cut = 3.0 * sigma
    rx, ry = int(cut // cell_w), int(cut // cell_h)
    dx = np.arange(-rx, rx + 1) * cell_w
    dy = np.arange(-ry, ry + 1) * cell_h
    d2 = dy[:, None] ** 2 + dx[None, :] ** 2
    w = np.exp(-d2 / (2 * sigma * sigma))
    w[d2 > cut * cut * (1 + 1e-12)] = 0.0
    return w, ry, rx


def _points(messages):
    for m in messages:
        yield m.latitude, m.longitude, m.captured_count


def grid_bounds(messages, cell_size: float, blur: float) -> Bounds:
    """Message extent padded by the kernel reach plus one cell on every side."""
    pts = list(_points(messages))
    if pts:
        lats = [p[0] for p in pts]
        lons = [p[1] for p in pts]
        s, n, w, e = min(lats), max(lats), min(lons), max(lons)
    else:
        s = n = w = e = 0.0
    pad = 1.5 * blur + cell_size  # 3 sigma with sigma = blur / 2
    lat_c = 0.5 * (s + n)
    plat = pad / M_PER_DEG_LAT
    plon = pad / m_per_deg_lon(lat_c)
    return Bounds(max(-90.0, s - plat), max(-180.0, w - plon), min(90.0, n + plat), min(180.0, e + plon))


def aggregate(messages, config: RenderConfig | None = None, bounds: Bounds | None = None) -> HeatGrid:
    config = config or RenderConfig()
    messages = list(messages)
    if bounds is None:
        lats = [m.latitude for m in messages] or [0.0]
        lat_c = 0.5 * (min(lats) + max(lats))
        cell = config.cell_size(lat_c)
        blur = config.blur(lat_c)
        bounds = grid_bounds(messages, cell, blur)
    else:
        cell = config.cell_size(bounds.center_lat)
        blur = config.blur(bounds.center_lat)
        for m in messages:
            if not bounds.contains(m.latitude, m.longitude):
                raise ValueError(f"capture ({m.latitude}, {m.longitude}) lies outside {bounds}")
    width_m = (bounds.max_lon - bounds.min_lon) * m_per_deg_lon(bounds.center_lat)
    height_m = (bounds.max_lat - bounds.min_lat) * M_PER_DEG_LAT
    nx = max(1, math.ceil(width_m / cell - 1e-9))
    ny = max(1, math.ceil(height_m / cell - 1e-9))
    grid = HeatGrid(bounds, cell, np.zeros((ny, nx)), blur_radius=blur,
                    meta={"zoom": config.zoom_preset})
    w, ry, rx = kernel(blur / 2.0, grid.cell_w_m or cell, grid.cell_h_m or cell)
    grid.kernel_mass = float(w.sum())
    raw = grid.raw
    spill = 0.0
    total = 0
    for lat, lon, count in _points(messages):
        total += count
        r, c = grid.cell_of(lat, lon)
        r0, r1 = r - ry, r + ry + 1
        c0, c1 = c - rx, c + rx + 1
        kr0, kc0 = max(0, -r0), max(0, -c0)
        kr1 = w.shape[0] - max(0, r1 - ny)
        kc1 = w.shape[1] - max(0, c1 - nx)
        patch = count * w[kr0:kr1, kc0:kc1]
        raw[max(0, r0):min(ny, r1), max(0, c0):min(nx, c1)] += patch
        if patch.shape != w.shape:
            spill += count * grid.kernel_mass - float(patch.sum())
    grid.spill = spill
    grid.total_count = total
    return grid


def _ramp_rgb(t: np.ndarray) -> np.ndarray:
    pos = np.array([p for p, _ in RAMP])
    rgb = np.array([c[:3] for _, c in RAMP], dtype=np.float64)
    out = np.empty(t.shape + (3,))
    for ch in range(3):
        out[..., ch] = np.interp(t, pos, rgb[:, ch])
    return out


def render_raster(grid: HeatGrid, config: RenderConfig | None = None) -> np.ndarray:
    """North-up RGBA uint8 raster, one pixel per cell."""
    config = config or RenderConfig()
    t = grid.intensity[::-1]
    rgba = np.zeros(t.shape + (4,), dtype=np.uint8)
    rgba[..., :3] = np.floor(_ramp_rgb(t) + 0.5).astype(np.uint8)
    rgba[..., 3] = np.floor(255.0 * config.opacity * t + 0.5).astype(np.uint8)
    rgba[t <= 0] = 0
    return rgba


def encode_png(rgba: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgba, "RGBA").save(buf, format="PNG", optimize=False, compress_level=9)
    return buf.getvalue()


def export_geojson(grid: HeatGrid) -> dict:
    """FeatureCollection with one polygon per nonzero cell (lon, lat order, CCW rings)."""
    inten = grid.intensity
    features = []
    rows, cols = np.nonzero(grid.raw > 0)
    for r, c in zip(rows.tolist(), cols.tolist()):
        w, s, e, n = grid.cell_bounds(r, c)
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [[[w, s], [e, s], [e, n], [w, n], [w, s]]]},
            "properties": {"row": r, "col": c, "raw": float(grid.raw[r, c]),
                           "intensity": float(inten[r, c])},
        })
    b = grid.bounds
    return {
        "type": "FeatureCollection",
        "bbox": [b.min_lon, b.min_lat, b.max_lon, b.max_lat],
        "features": features,
    }


def dumps_geojson(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def _ticks(lo: float, hi: float, n: int = 5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def export_html(grid: HeatGrid, config: RenderConfig | None = None, png: bytes | None = None) -> str:
    """Standalone page: raster over a labelled lat/lon grid, plus a legend. No network fetches."""
    config = config or RenderConfig()
    if png is None:
        png = encode_png(render_raster(grid, config))
    data = base64.b64encode(png).decode("ascii")
    b = grid.bounds
    view_w = 640
    view_h = max(1, round(view_w * grid.ny * grid.cell_h_m / (grid.nx * grid.cell_w_m)))
    gridlines = []
    for i, lon in enumerate(_ticks(b.min_lon, b.max_lon)):
        x = round(view_w * i / 4)
        gridlines.append(f'<div class="vl" style="left:{x}px"></div>'
                         f'<div class="xl" style="left:{x}px">{lon:.5f}</div>')
    for i, lat in enumerate(_ticks(b.min_lat, b.max_lat)):
        y = round(view_h * (1 - i / 4))
        gridlines.append(f'<div class="hl" style="top:{y}px"></div>'
                         f'<div class="yl" style="top:{y}px">{lat:.5f}</div>')
    stops = ", ".join(f"rgba({c[0]},{c[1]},{c[2]},{c[3] / 255:.2f}) {p * 100:.0f}%" for p, c in RAMP)
    legend = "".join(f'<span class="stop">{p:.2f}</span>' for p, _ in RAMP)
    title = html.escape(f"Capture density, zoom {config.zoom} "
                        f"(cell {grid.cell_w_m:.2f} x {grid.cell_h_m:.2f} m, blur {grid.blur_radius:.1f} m)")
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: sans-serif; margin: 24px; background: #fafafa; }}
.map {{ position: relative; width: {view_w}px; height: {view_h}px; margin: 8px 0 40px 90px;
        background: #e8efe4; border: 1px solid #777; }}
.map img {{ position: absolute; left: 0; top: 0; width: {view_w}px; height: {view_h}px;
            image-rendering: pixelated; }}
.vl {{ position: absolute; top: 0; bottom: 0; border-left: 1px dashed #aaa; }}
.hl {{ position: absolute; left: 0; right: 0; border-top: 1px dashed #aaa; }}
.xl {{ position: absolute; top: {view_h + 6}px; transform: translateX(-50%); font-size: 11px; }}
.yl {{ position: absolute; left: -84px; transform: translateY(-50%); font-size: 11px; }}
.legend {{ width: 320px; height: 14px; border: 1px solid #777; background: linear-gradient(to right, {stops}); }}
.ticks {{ width: 320px; display: flex; justify-content: space-between; font-size: 11px; }}
</style>
</head>
<body>
<h1 style="font-size:18px">{title}</h1>
<div class="map">
{"".join(gridlines)}
<img alt="heat overlay" src="data:image/png;base64,{data}">
</div>
<p>longitude (east) / latitude (north), degrees. captures: {grid.total_count}; opacity {config.opacity:.2f}</p>
<div class="legend"></div>
<div class="ticks">{legend}</div>
<p style="font-size:11px">normalised intensity</p>
</body>
</html>
"""
