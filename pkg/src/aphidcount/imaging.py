"""Netpbm graymap/pixmap I/O and the average-gradient-magnitude clarity metric."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import ndimage

__all__ = [
    "GrayImage",
    "ImageFormatError",
    "MalformedHeaderError",
    "TruncatedDataError",
    "UnsupportedMaxvalError",
    "load_image",
    "read_image",
    "encode_pgm",
    "write_pgm",
    "average_gradient_magnitude",
    "box_blur",
]


class ImageFormatError(ValueError):
    """Base class for netpbm decoding failures."""


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedDataError(ImageFormatError):
    pass


class UnsupportedMaxvalError(ImageFormatError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit luma raster; ``pixels`` is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            px = np.rint(px).astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


_WHITESPACE = b" \t\n\r\v\f"
_LUMA = np.array([0.299, 0.587, 0.114])


def _read_header(data: bytes, count: int):
    """Read the magic number plus ``count`` integer fields; return (magic, fields, offset)."""
    pos = 0
    tokens = []
    n = len(data)
    while len(tokens) < count + 1:
        while pos < n and (data[pos] in _WHITESPACE or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise MalformedHeaderError("header ends early")
        start = pos
        while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        fields = [int(t) for t in tokens[1:]]
    except ValueError:
        raise MalformedHeaderError(f"non-integer header field in {tokens[1:]!r}") from None
    return magic, fields, pos


def load_image(data: bytes) -> GrayImage:
    """Decode a P2, P5 or P6 netpbm image into luma.

    Pixmaps are converted with 0.299 R + 0.587 G + 0.114 B, rounded.
    Maxvals below 255 are rescaled onto 0..255.
    """
    if data[:2] not in (b"P2", b"P5", b"P6"):
        raise MalformedHeaderError(f"unsupported magic number {data[:2]!r}")
    magic, (width, height, maxval), pos = _read_header(data, 3)
    if magic not in (b"P2", b"P5", b"P6"):
        raise MalformedHeaderError(f"unsupported magic number {magic!r}")
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} not in 1..255")
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels

    if magic == b"P2":
        try:
            values = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise MalformedHeaderError("non-integer sample in ASCII payload") from None
        if values.size < expected:
            raise TruncatedDataError(f"expected {expected} samples, found {values.size}")
        values = values[:expected]
    else:
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise MalformedHeaderError("missing whitespace after maxval")
        payload = data[pos + 1 :]
        if len(payload) < expected:
            raise TruncatedDataError(f"expected {expected} bytes, found {len(payload)}")
        values = np.frombuffer(payload, dtype=np.uint8, count=expected).astype(np.int64)

    if np.any(values > maxval) or np.any(values < 0):
        raise MalformedHeaderError("sample exceeds maxval")
    raster = values.reshape(height, width, channels).astype(np.float64)
    if channels == 3:
        raster = raster @ _LUMA
    else:
        raster = raster[..., 0]
    if maxval != 255:
        raster = raster * (255.0 / maxval)
    return GrayImage(np.clip(np.rint(raster), 0, 255).astype(np.uint8))


def read_image(path: Union[str, Path]) -> GrayImage:
    return load_image(Path(path).read_bytes())


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def write_pgm(path: Union[str, Path], img: GrayImage) -> None:
    Path(path).write_bytes(encode_pgm(img))


def _as_float(img) -> np.ndarray:
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
    return np.asarray(px, dtype=np.float64)


def average_gradient_magnitude(img, kernel: str = "central") -> float:
    """Mean of sqrt(gx**2 + gy**2) over every pixel of the image.

    ``kernel="central"`` uses central differences in the interior and
    one-sided differences on the border rows/columns.  ``kernel="sobel"``
    uses the 3x3 Sobel pair scaled by 1/8 (unit response to a unit ramp)
    with nearest-edge padding.

    Accepts a :class:`GrayImage` or a real-valued 2-D array.  The mean is
    numpy's pairwise sum over the row-major raster, so results are
    reproducible bit for bit.
    """
    px = _as_float(img)
    if px.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {px.shape}")
    if px.shape[0] < 2 or px.shape[1] < 2:
        raise ValueError(f"need at least 2x2 pixels for gradients, got {px.shape[1]}x{px.shape[0]}")
    if kernel == "central":
        gy, gx = np.gradient(px)
    elif kernel == "sobel":
        gx = ndimage.sobel(px, axis=1, mode="nearest") / 8.0
        gy = ndimage.sobel(px, axis=0, mode="nearest") / 8.0
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return float(np.mean(np.hypot(gx, gy)))


def box_blur(img, radius: int) -> np.ndarray:
    """Mean filter over a (2r+1)^2 window, edge pixels replicated; returns floats."""
    px = _as_float(img)
    radius = int(radius)
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return px.copy()
    return ndimage.uniform_filter(px, size=2 * radius + 1, mode="nearest")
