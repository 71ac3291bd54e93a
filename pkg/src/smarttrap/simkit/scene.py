"""Synthetic trap frames with exact ground truth.

Dark rectangles and ellipses on a light, per-pixel jittered background, plus
sub-element specks and holes that the denoiser must remove. Ground truth
comes from the blob dimensions in the SceneSpec, never from the rendered image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detection import DEFAULT_RANGE, SizeRange
from ..imaging import RgbImage

MIN_GAP = 5
FRAME_MARGIN = 2
NOISE_GAP = 3  # background pixels required between a speck and any blob
HOLE_CLEARANCE = 3  # blob pixels required around a hole


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Blob:
    cx: int
    cy: int
    w: int
    h: int
    intensity: int = 30
    shape: str = "rect"  # rect | ellipse

    @property
    def x(self) -> int:
        return self.cx - self.w // 2

    @property
    def y(self) -> int:
        return self.cy - self.h // 2

    @property
    def box(self) -> tuple[int, int, int, int]:
        """Inclusive (x1, y1, x2, y2)."""
        return self.x, self.y, self.x + self.w - 1, self.y + self.h - 1


@dataclass(frozen=True)
class Noise:
    x: int
    y: int
    w: int = 1
    h: int = 1
    kind: str = "speck"  # speck (dark on background) | hole (light inside a blob)

    @property
    def box(self) -> tuple[int, int, int, int]:
        return self.x, self.y, self.x + self.w - 1, self.y + self.h - 1


@dataclass(frozen=True)
class SceneSpec:
    width: int = 640
    height: int = 480
    blobs: tuple[Blob, ...] = ()
    noise: tuple[Noise, ...] = ()
    rng_seed: int = 0
    background_min: int = 200
    se_size: int = 3


@dataclass(frozen=True)
class Scene:
    image: RgbImage
    cbb: int
    unknown: int
    spec: SceneSpec = field(repr=False)

    def __iter__(self):
        # unpacks as (image, cbb, unknown)
        return iter((self.image, self.cbb, self.unknown))


def box_gap(a, b) -> int:
    """Background pixels separating two inclusive boxes along the clearer axis."""
    return max(b[0] - a[2] - 1, a[0] - b[2] - 1, b[1] - a[3] - 1, a[1] - b[3] - 1)


def blob_mask(w: int, h: int, shape: str) -> np.ndarray:
    if shape == "rect":
        return np.ones((h, w), dtype=bool)
    if shape == "ellipse":
        u = (np.arange(w) + 0.5 - w / 2) / (w / 2)
        v = (np.arange(h) + 0.5 - h / 2) / (h / 2)
        return (u[None, :] ** 2 + v[:, None] ** 2) <= 1.0
    raise SceneError(f"unknown blob shape {shape!r}")


def _longest_run(line: np.ndarray) -> int:
    best = run = 0
    for v in line:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def _check_blob(b: Blob, spec: SceneSpec) -> np.ndarray:
    se = spec.se_size
    if b.w < se or b.h < se:
        raise SceneError(f"blob {b} is smaller than the {se}x{se} structuring element")
    if not 0 <= b.intensity <= 45:
        raise SceneError(f"blob intensity {b.intensity} must lie in [0, 45]")
    x1, y1, x2, y2 = b.box
    m = FRAME_MARGIN
    if x1 < m or y1 < m or x2 > spec.width - 1 - m or y2 > spec.height - 1 - m:
        raise SceneError(f"blob {b} is within {m} px of the frame edge")
    mask = blob_mask(b.w, b.h, b.shape)
    # the outermost rows/columns must survive an opening, or the bbox shrinks
    for line in (mask[0], mask[-1], mask[:, 0], mask[:, -1]):
        if _longest_run(line) < se:
            raise SceneError(f"blob {b}: {b.shape} tip too thin to survive denoising")
    return mask


def validate(spec: SceneSpec) -> list[np.ndarray]:
    if spec.width < 1 or spec.height < 1:
        raise SceneError("frame must be at least 1x1")
    if not 200 <= spec.background_min <= 255:
        raise SceneError("background intensity must be >= 200")
    masks = [_check_blob(b, spec) for b in spec.blobs]
    for i, a in enumerate(spec.blobs):
        for b in spec.blobs[i + 1:]:
            if box_gap(a.box, b.box) < MIN_GAP:
                raise SceneError(f"blobs {a} and {b} are closer than {MIN_GAP} px")
    specks = []
    for nz in spec.noise:
        if not (1 <= nz.w < spec.se_size and 1 <= nz.h < spec.se_size):
            raise SceneError(f"noise {nz} is not smaller than the structuring element")
        x1, y1, x2, y2 = nz.box
        if x1 < 0 or y1 < 0 or x2 >= spec.width or y2 >= spec.height:
            raise SceneError(f"noise {nz} lies outside the frame")
        if nz.kind == "speck":
            for b in spec.blobs:
                if box_gap(nz.box, b.box) < NOISE_GAP:
                    raise SceneError(f"speck {nz} is within {NOISE_GAP} px of blob {b}")
            for other in specks:
                if box_gap(nz.box, other.box) < 1:
                    raise SceneError(f"specks {nz} and {other} touch")
            specks.append(nz)
        elif nz.kind == "hole":
            c = HOLE_CLEARANCE
            for b, mask in zip(spec.blobs, masks):
                bx1, by1, _, _ = b.box
                lx1, ly1, lx2, ly2 = x1 - bx1 - c, y1 - by1 - c, x2 - bx1 + c, y2 - by1 + c
                if lx1 >= 0 and ly1 >= 0 and lx2 < b.w and ly2 < b.h:
                    if mask[ly1:ly2 + 1, lx1:lx2 + 1].all():
                        break
            else:
                raise SceneError(f"hole {nz} is not {c} px deep inside any blob")
        else:
            raise SceneError(f"unknown noise kind {nz.kind!r}")
    return masks


def ground_truth(spec: SceneSpec, size_range: SizeRange = DEFAULT_RANGE) -> tuple[int, int]:
    cbb = sum(1 for b in spec.blobs if size_range.contains(b.w, b.h))
    return cbb, len(spec.blobs) - cbb


def generate_scene(spec: SceneSpec, size_range: SizeRange = DEFAULT_RANGE) -> Scene:
    masks = validate(spec)
    rng = np.random.default_rng(spec.rng_seed)
    h, w = spec.height, spec.width
    px = rng.integers(spec.background_min, 256, size=(h, w, 3), dtype=np.uint8)
    for b, mask in zip(spec.blobs, masks):
        region = px[b.y:b.y + b.h, b.x:b.x + b.w]
        dark = rng.integers(0, b.intensity + 1, size=(b.h, b.w, 3), dtype=np.uint8)
        region[mask] = dark[mask]
    for nz in spec.noise:
        region = px[nz.y:nz.y + nz.h, nz.x:nz.x + nz.w]
        if nz.kind == "speck":
            region[...] = rng.integers(0, 46, size=region.shape, dtype=np.uint8)
        else:
            region[...] = rng.integers(spec.background_min, 256, size=region.shape, dtype=np.uint8)
    cbb, unknown = ground_truth(spec, size_range)
    return Scene(RgbImage(px), cbb, unknown, spec)


def _place(rng, spec_w, spec_h, sizes, placed, shape_for, intensity_for, tries=400):
    out = []
    for bw, bh in sizes:
        for _ in range(tries):
            shape = shape_for(bw, bh)
            cx = int(rng.integers(FRAME_MARGIN + bw // 2, spec_w - FRAME_MARGIN - (bw - bw // 2) + 1))
            cy = int(rng.integers(FRAME_MARGIN + bh // 2, spec_h - FRAME_MARGIN - (bh - bh // 2) + 1))
            cand = Blob(cx, cy, bw, bh, intensity_for(), shape)
            if all(box_gap(cand.box, o.box) >= MIN_GAP for o in placed + out):
                out.append(cand)
                break
    return out


def _ellipse_ok(bw: int, bh: int, se: int = 3) -> bool:
    mask = blob_mask(bw, bh, "ellipse")
    return all(_longest_run(line) >= se for line in (mask[0], mask[-1], mask[:, 0], mask[:, -1]))


def random_scene_spec(
    seed: int,
    width: int = 640,
    height: int = 480,
    n_blobs: tuple[int, int] = (0, 14),
    size: tuple[int, int] = (5, 90),
    n_specks: tuple[int, int] = (0, 25),
    n_holes: tuple[int, int] = (0, 6),
) -> SceneSpec:
    """Seeded random scene: blobs, specks and holes placed to satisfy ``validate``."""
    rng = np.random.default_rng(seed)
    count = int(rng.integers(n_blobs[0], n_blobs[1] + 1))
    sizes = [(int(rng.integers(size[0], size[1] + 1)), int(rng.integers(size[0], size[1] + 1)))
             for _ in range(count)]

    def shape_for(bw, bh):
        if rng.random() < 0.4 and _ellipse_ok(bw, bh):
            return "ellipse"
        return "rect"

    blobs = _place(rng, width, height, sizes, [], shape_for, lambda: int(rng.integers(0, 46)))
    probe = SceneSpec(width, height, tuple(blobs))
    masks = validate(probe)

    noise: list[Noise] = []
    specks = []
    for _ in range(int(rng.integers(n_specks[0], n_specks[1] + 1))):
        for _ in range(50):
            nz = Noise(int(rng.integers(0, width - 1)), int(rng.integers(0, height - 1)),
                       int(rng.integers(1, 3)), int(rng.integers(1, 3)), "speck")
            if nz.x + nz.w > width or nz.y + nz.h > height:
                continue
            if all(box_gap(nz.box, b.box) >= NOISE_GAP for b in blobs) and \
                    all(box_gap(nz.box, s.box) >= 1 for s in specks):
                specks.append(nz)
                break
    noise += specks

    holes: list[Noise] = []
    c = HOLE_CLEARANCE
    roomy = [(b, m) for b, m in zip(blobs, masks) if b.w >= 2 * c + 2 and b.h >= 2 * c + 2]
    for _ in range(int(rng.integers(n_holes[0], n_holes[1] + 1))):
        if not roomy:
            break
        b, mask = roomy[int(rng.integers(0, len(roomy)))]
        hw, hh = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        for _ in range(30):
            lx = int(rng.integers(c, b.w - c - hw + 1))
            ly = int(rng.integers(c, b.h - c - hh + 1))
            if mask[ly - c:ly + hh + c, lx - c:lx + hw + c].all():
                holes.append(Noise(b.x + lx, b.y + ly, hw, hh, "hole"))
                break
    noise += holes
    return SceneSpec(width, height, tuple(blobs), tuple(noise), rng_seed=seed)


def reference_scene_spec(seed: int = 6) -> SceneSpec:
    """640x480 frame with 11 beetle-sized blobs (15-55 px) and 3 oversized ones (70-90 px)."""
    rng = np.random.default_rng(seed)
    small = [(int(rng.integers(15, 56)), int(rng.integers(15, 56))) for _ in range(11)]
    large = [(72, 88), (90, 30), (80, 76)]

    def shape_for(bw, bh):
        return "ellipse" if _ellipse_ok(bw, bh) and rng.random() < 0.5 else "rect"

    placed = _place(rng, 640, 480, large, [], shape_for, lambda: int(rng.integers(5, 40)))
    placed += _place(rng, 640, 480, small, placed, shape_for, lambda: int(rng.integers(5, 40)))
    if len(placed) != 14:
        raise SceneError("could not lay out the 14-blob frame")
    base = SceneSpec(640, 480, tuple(placed), rng_seed=seed)
    masks = validate(base)
    speck_spec = random_scene_spec(seed + 1000, n_blobs=(0, 0), n_holes=(0, 0), n_specks=(40, 40))
    specks = [s for s in speck_spec.noise if all(box_gap(s.box, b.box) >= NOISE_GAP for b in placed)]
    holes = []
    for b, mask in zip(placed, masks):
        lx, ly = b.w // 2, b.h // 2
        c = HOLE_CLEARANCE
        if mask[ly - c:ly + 1 + c, lx - c:lx + 1 + c].shape == (2 * c + 1, 2 * c + 1) and \
                mask[ly - c:ly + 1 + c, lx - c:lx + 1 + c].all():
            holes.append(Noise(b.x + lx, b.y + ly, 1, 1, "hole"))
    return SceneSpec(640, 480, tuple(placed), tuple(specks + holes), rng_seed=seed)


def capture_scene_spec(count: int, seed: int, width: int = 640, height: int = 480,
                       size: tuple[int, int] = (12, 30)) -> SceneSpec:
    """Frame holding ``count`` beetle-sized blobs on a grid, for scripted captures."""
    cell = size[1] + MIN_GAP + 5
    cols = (width - 2 * FRAME_MARGIN) // cell
    rows = (height - 2 * FRAME_MARGIN) // cell
    if count > cols * rows:
        raise SceneError(f"{count} blobs do not fit one {width}x{height} frame")
    rng = np.random.default_rng(seed)
    slots = rng.permutation(cols * rows)[:count]
    blobs = []
    for s in sorted(slots.tolist()):
        r, c = divmod(s, cols)
        bw, bh = (int(v) for v in rng.integers(size[0], size[1] + 1, size=2))
        cx = FRAME_MARGIN + c * cell + cell // 2
        cy = FRAME_MARGIN + r * cell + cell // 2
        blobs.append(Blob(cx, cy, bw, bh, int(rng.integers(0, 40)), "rect"))
    return SceneSpec(width, height, tuple(blobs), rng_seed=seed)
