"""Size-based classification of foreground components and frame annotation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .imaging import (
    BoundingBox,
    Component,
    DEFAULT_THRESHOLD,
    RgbImage,
    SQUARE_3,
    StructuringElement,
    binarize,
    connected_components,
    denoise,
    invert,
    to_grayscale,
)

GREEN = (0, 255, 0)
RED = (255, 0, 0)


class Klass(str, enum.Enum):
    CBB = "CBB"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SizeRange:
    min_px: int = 10
    max_px: int = 60

    def __post_init__(self):
        if not 1 <= self.min_px <= self.max_px:
            raise ValueError(f"need 1 <= min_px <= max_px, got [{self.min_px}, {self.max_px}]")

    def contains(self, w: int, h: int) -> bool:
        return self.min_px <= w <= self.max_px and self.min_px <= h <= self.max_px


DEFAULT_RANGE = SizeRange()


@dataclass(frozen=True)
class Detection:
    bbox: BoundingBox
    klass: Klass

    def to_record(self) -> dict:
        b = self.bbox
        return {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "klass": self.klass.value}


@dataclass(frozen=True)
class DetectionResult:
    detections: tuple[Detection, ...] = field(default_factory=tuple)

    @property
    def cbb_count(self) -> int:
        return sum(1 for d in self.detections if d.klass is Klass.CBB)

    @property
    def unknown_count(self) -> int:
        return sum(1 for d in self.detections if d.klass is Klass.UNKNOWN)

    def to_record(self) -> dict:
        return {
            "cbb_count": self.cbb_count,
            "unknown_count": self.unknown_count,
            "detections": [d.to_record() for d in self.detections],
        }


def classify(comp: Component, size_range: SizeRange = DEFAULT_RANGE) -> Detection:
    """Both bbox sides inside the inclusive range -> CBB, anything else Unknown."""
    b = comp.bbox
    klass = Klass.CBB if size_range.contains(b.w, b.h) else Klass.UNKNOWN
    return Detection(b, klass)


def detect(
    frame: RgbImage,
    threshold: int = DEFAULT_THRESHOLD,
    se: StructuringElement = SQUARE_3,
    size_range: SizeRange = DEFAULT_RANGE,
) -> DetectionResult:
    mask = denoise(invert(binarize(to_grayscale(frame), threshold)), se)
    return DetectionResult(tuple(classify(c, size_range) for c in connected_components(mask)))


def annotate(frame: RgbImage, result: DetectionResult) -> RgbImage:
    """Copy of ``frame`` with 1-px outlines: green around CBB, red around Unknown."""
    px = frame.pixels.copy()
    for det in result.detections:
        b = det.bbox
        if not b.within(frame.width, frame.height):
            raise ValueError(f"bounding box {b} exceeds {frame.width}x{frame.height} frame")
        color = np.array(GREEN if det.klass is Klass.CBB else RED, np.uint8)
        px[b.y, b.x:b.x2 + 1] = color
        px[b.y2, b.x:b.x2 + 1] = color
        px[b.y:b.y2 + 1, b.x] = color
        px[b.y:b.y2 + 1, b.x2] = color
    return RgbImage(px)


def count_outlines(img: RgbImage, color) -> int:
    """Count axis-aligned 1-px rectangle outlines of ``color`` in ``img``.

    Used to check annotated frames: a rectangle is found by its top-left
    corner, then confirmed by walking its four sides.
    """
    px = img.pixels
    mask = np.all(px == np.array(color, np.uint8), axis=2)
    h, w = mask.shape
    found = 0
    ys, xs = np.nonzero(mask)
    for y, x in zip(ys.tolist(), xs.tolist()):
        # top-left corner: no same-color pixel to the left or above
        if (x > 0 and mask[y, x - 1]) or (y > 0 and mask[y - 1, x]):
            continue
        x2 = x
        while x2 + 1 < w and mask[y, x2 + 1]:
            x2 += 1
        y2 = y
        while y2 + 1 < h and mask[y2 + 1, x]:
            y2 += 1
        if mask[y2, x:x2 + 1].all() and mask[y:y2 + 1, x2].all():
            found += 1
    return found
