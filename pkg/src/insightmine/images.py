"""8-bit RGB rasters with binary PPM (P6) I/O and nearest-neighbour resize."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageError(ValueError):
    pass


@dataclass
class ImageRaster:
    pixels: np.ndarray  # (height, width, 3) uint8, row-major

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ImageError(f"expected (h, w, 3) pixels, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def resize(self, size: int) -> "ImageRaster":
        """Nearest-neighbour resize to size x size (the documented step that
        enforces divisibility by the configured patch size)."""
        ys = (np.arange(size) * self.height / size).astype(int)
        xs = (np.arange(size) * self.width / size).astype(int)
        return ImageRaster(self.pixels[np.ix_(ys, xs)])

    def to_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64) / 255.0


def patchify(img: ImageRaster, patch_size: int) -> np.ndarray:
    """Row-major (n_patches, patch_size^2 * 3) float array in [0, 1]."""
    if img.height % patch_size or img.width % patch_size:
        raise ImageError(
            f"image {img.width}x{img.height} not divisible by patch size {patch_size}"
        )
    g_h = img.height // patch_size
    g_w = img.width // patch_size
    arr = img.to_float().reshape(g_h, patch_size, g_w, patch_size, 3)
    return arr.transpose(0, 2, 1, 3, 4).reshape(g_h * g_w, patch_size * patch_size * 3)


def write_ppm(img: ImageRaster, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(img.pixels.tobytes())


def read_ppm(path: str | Path) -> ImageRaster:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval, then a single whitespace byte
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4 or fields[0] != b"P6":
        raise ImageError(f"{path}: not a binary PPM (P6) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ImageError(f"{path}: only 8-bit PPM supported, maxval={maxval}")
    pos += 1  # single whitespace after maxval
    raw = data[pos : pos + width * height * 3]
    if len(raw) != width * height * 3:
        raise ImageError(f"{path}: truncated pixel data")
    return ImageRaster(np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy())
