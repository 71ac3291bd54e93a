"""Binary Netpbm codec: P6 (color) and P5 (gray).

Binary images are stored as P5 with values 0 and 255.
"""

from __future__ import annotations

import os

import numpy as np

from .imaging import BinaryImage, GrayImage, RgbImage


class NetpbmError(ValueError):
    pass


def _header(data: bytes):
    """Parse magic, width, height, maxval; return them plus the raster offset."""
    fields = []
    pos = 0
    n = len(data)
    while len(fields) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmError("truncated header")
        fields.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise NetpbmError("truncated header")
    pos += 1
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic {magic!r}; only binary P5/P6 are read")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise NetpbmError(f"bad header field: {exc}") from None
    if width < 1 or height < 1:
        raise NetpbmError(f"bad dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise NetpbmError(f"bad maxval {maxval}")
    return magic, width, height, maxval, pos


def decode(data: bytes) -> RgbImage | GrayImage:
    magic, width, height, maxval, pos = _header(data)
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    expected = width * height * channels * dtype.itemsize
    raster = data[pos:pos + expected]
    if len(raster) < expected:
        raise NetpbmError(f"truncated raster: expected {expected} bytes, got {len(raster)}")
    px = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    if px.max(initial=0) > maxval:
        raise NetpbmError("sample exceeds maxval")
    if maxval != 255:
        px = (px * 255 + maxval // 2) // maxval
    px = px.astype(np.uint8)
    if channels == 3:
        return RgbImage(px.reshape(height, width, 3))
    return GrayImage(px.reshape(height, width))


def encode(img: RgbImage | GrayImage | BinaryImage) -> bytes:
    if isinstance(img, RgbImage):
        magic, px = b"P6", img.pixels
    elif isinstance(img, GrayImage):
        magic, px = b"P5", img.pixels
    elif isinstance(img, BinaryImage):
        magic, px = b"P5", np.where(img.pixels, 255, 0).astype(np.uint8)
    else:
        raise TypeError(f"cannot encode {type(img).__name__}")
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + np.ascontiguousarray(px, dtype=np.uint8).tobytes()


def read(path: str | os.PathLike) -> RgbImage | GrayImage:
    with open(path, "rb") as fh:
        return decode(fh.read())


def read_rgb(path: str | os.PathLike) -> RgbImage:
    img = read(path)
    if isinstance(img, GrayImage):
        return RgbImage(np.repeat(img.pixels[:, :, None], 3, axis=2))
    return img


def write(path: str | os.PathLike, img: RgbImage | GrayImage | BinaryImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(img))
