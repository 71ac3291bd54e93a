"""Raster types and the binary-vision front end.

Frames move through ``to_grayscale -> binarize -> invert -> denoise`` and the
resulting foreground is split into 8-connected components whose bounding
boxes feed the size classifier in :mod:`smarttrap.detection`.

Images wrap read-only numpy arrays in row-major (height, width[, 3]) layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 45

# BT.601 luma weights
_LUMA = (0.299, 0.587, 0.114)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"RgbImage needs shape (h, w, 3), got {px.shape}")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("channel intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, color=(255, 255, 255)) -> "RgbImage":
        return cls(np.broadcast_to(np.array(color, np.uint8), (height, width, 3)).copy())

    def __eq__(self, other):
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray  # (h, w) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"GrayImage needs shape (h, w), got {px.shape}")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("gray intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """True is white (foreground after inversion), False is black."""

    pixels: np.ndarray  # (h, w) bool

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"BinaryImage needs shape (h, w), got {px.shape}")
        object.__setattr__(self, "pixels", _frozen(px.astype(bool, copy=False)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def count(self) -> int:
        return int(self.pixels.sum())

    def __eq__(self, other):
        return isinstance(other, BinaryImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class StructuringElement:
    size: int = 3
    shape: str = "square"

    def __post_init__(self):
        if self.shape != "square":
            raise ValueError(f"unsupported structuring element shape {self.shape!r}")
        if self.size < 1 or self.size % 2 == 0:
            raise ValueError(f"structuring element size must be odd and >= 1, got {self.size}")

    @property
    def radius(self) -> int:
        return self.size // 2


SQUARE_3 = StructuringElement(3)


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"bounding box extent must be positive, got {self.w}x{self.h}")

    @property
    def x2(self) -> int:
        """Inclusive right column."""
        return self.x + self.w - 1

    @property
    def y2(self) -> int:
        return self.y + self.h - 1

    def within(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Component:
    label: int
    pixel_count: int
    bbox: BoundingBox


def to_grayscale(img: RgbImage) -> GrayImage:
    px = img.pixels.astype(np.float64)
    luma = _LUMA[0] * px[..., 0] + _LUMA[1] * px[..., 1] + _LUMA[2] * px[..., 2]
    # round half up; np.rint would use banker's rounding
    return GrayImage(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8))


def binarize(img: GrayImage, threshold: int = DEFAULT_THRESHOLD) -> BinaryImage:
    """Pixels lighter than ``threshold`` become white; ties go to black."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must lie in [0, 255], got {threshold}")
    return BinaryImage(img.pixels > threshold)


def invert(img: BinaryImage) -> BinaryImage:
    return BinaryImage(~img.pixels)


def _window_reduce(px: np.ndarray, radius: int, fill: bool, reduce) -> np.ndarray:
    if radius == 0:
        return px.copy()
    h, w = px.shape
    padded = np.full((h + 2 * radius, w + 2 * radius), fill, dtype=bool)
    padded[radius:radius + h, radius:radius + w] = px
    # separable: a square window is a row window followed by a column window
    rows = padded[:, 0:w].copy()
    for dx in range(1, 2 * radius + 1):
        reduce(rows, padded[:, dx:dx + w], out=rows)
    out = rows[0:h].copy()
    for dy in range(1, 2 * radius + 1):
        reduce(out, rows[dy:dy + h], out=out)
    return out


def erode(img: BinaryImage, se: StructuringElement = SQUARE_3) -> BinaryImage:
    """Foreground survives only where the whole window is foreground.

    Pixels outside the frame count as background, so the border erodes.
    """
    return BinaryImage(_window_reduce(img.pixels, se.radius, False, np.logical_and))


def dilate(img: BinaryImage, se: StructuringElement = SQUARE_3) -> BinaryImage:
    return BinaryImage(_window_reduce(img.pixels, se.radius, False, np.logical_or))


def open(img: BinaryImage, se: StructuringElement = SQUARE_3) -> BinaryImage:  # noqa: A001
    return dilate(erode(img, se), se)


def close(img: BinaryImage, se: StructuringElement = SQUARE_3) -> BinaryImage:
    return erode(dilate(img, se), se)


# aliases that do not shadow builtins when star-imported
opening = open
closing = close


def denoise(img: BinaryImage, se: StructuringElement = SQUARE_3) -> BinaryImage:
    """Drop white specks smaller than ``se``, then fill black holes smaller than ``se``."""
    return close(open(img, se), se)


class _DisjointSet:
    def __init__(self):
        self.parent: list[int] = []

    def add(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the earlier run as root so roots stay in scan order
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _row_runs(px: np.ndarray):
    """Yield (row, start, end_inclusive) for each horizontal foreground run."""
    h, w = px.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = px
    edges = np.diff(padded, axis=1)
    starts_r, starts_c = np.nonzero(edges == 1)
    ends_r, ends_c = np.nonzero(edges == -1)
    # nonzero is row-major, so starts and ends pair up in order
    return starts_r, starts_c, ends_c - 1


def connected_components(img: BinaryImage) -> list[Component]:
    """8-connected foreground components, labelled 1.. in row-major order of
    each component's first pixel."""
    rows, starts, ends = _row_runs(img.pixels)
    n = len(rows)
    if n == 0:
        return []
    ds = _DisjointSet()
    for _ in range(n):
        ds.add()

    # runs are sorted by (row, start); sweep pairs of adjacent rows
    prev_lo = prev_hi = 0
    prev_row = None
    i = 0
    while i < n:
        r = int(rows[i])
        j = i
        while j < n and rows[j] == r:
            j += 1
        if prev_row is not None and prev_row == r - 1:
            k = prev_lo
            for cur in range(i, j):
                s, e = starts[cur], ends[cur]
                while k < prev_hi and ends[k] < s - 1:
                    k += 1
                m = k
                while m < prev_hi and starts[m] <= e + 1:
                    ds.union(m, cur)
                    m += 1
        prev_row, prev_lo, prev_hi = r, i, j
        i = j

    comps: dict[int, list[int]] = {}
    for i in range(n):
        root = ds.find(i)
        if root not in comps:
            comps[root] = [int(rows[i]), int(rows[i]), int(starts[i]), int(ends[i]), 0]
        c = comps[root]
        c[1] = max(c[1], int(rows[i]))
        c[2] = min(c[2], int(starts[i]))
        c[3] = max(c[3], int(ends[i]))
        c[4] += int(ends[i] - starts[i] + 1)

    # roots are each component's earliest run, which holds its first pixel
    out = []
    for label, root in enumerate(sorted(comps), start=1):
        y1, y2, x1, x2, count = comps[root]
        out.append(Component(label, count, BoundingBox(x1, y1, x2 - x1 + 1, y2 - y1 + 1)))
    return out
