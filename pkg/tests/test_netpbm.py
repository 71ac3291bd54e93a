import numpy as np
import pytest

from smarttrap import netpbm
from smarttrap.imaging import BinaryImage, GrayImage, RgbImage


def test_p6_layout_and_roundtrip():
    img = RgbImage(np.array([[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [1, 2, 3]]], np.uint8))
    data = netpbm.encode(img)
    assert data == b"P6\n2 2\n255\n" + bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 1, 2, 3])
    assert netpbm.decode(data) == img


def test_p5_roundtrip_and_binary_values():
    gray = GrayImage(np.arange(12, dtype=np.uint8).reshape(3, 4))
    assert netpbm.decode(netpbm.encode(gray)) == gray
    binary = BinaryImage(np.array([[True, False]]))
    assert netpbm.encode(binary).endswith(bytes([255, 0]))


def test_header_comments_and_whitespace():
    data = b"P5 # gray\n# a comment line\n 2\t1\n255\n" + bytes([7, 9])
    assert netpbm.decode(data).pixels.tolist() == [[7, 9]]


def test_maxval_rescaled_and_16bit():
    assert netpbm.decode(b"P5\n2 1\n15\n" + bytes([15, 0])).pixels.tolist() == [[255, 0]]
    data = b"P5\n1 1\n65535\n" + (65535).to_bytes(2, "big")
    assert netpbm.decode(data).pixels.tolist() == [[255]]


@pytest.mark.parametrize("data", [
    b"",
    b"P6\n2 2\n255\n" + bytes(5),        # truncated raster
    b"P6\n2",                             # truncated header
    b"P3\n1 1\n255\n0 0 0\n",             # ASCII variant not supported
    b"P5\n0 1\n255\n",
    b"P5\n1 1\n10\n" + bytes([11]),       # sample above maxval
])
def test_malformed_rejected(data):
    with pytest.raises(netpbm.NetpbmError):
        netpbm.decode(data)


def test_file_roundtrip(tmp_path):
    img = RgbImage(np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8))
    netpbm.write(tmp_path / "f.ppm", img)
    assert netpbm.read(tmp_path / "f.ppm") == img
    netpbm.write(tmp_path / "g.pgm", GrayImage(img.pixels[..., 0]))
    assert netpbm.read_rgb(tmp_path / "g.pgm").pixels[..., 2].tolist() == img.pixels[..., 0].tolist()
