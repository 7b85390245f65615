"""Split-merge tiling: overlapping fixed-size blocks, remap, cross-tile fusion."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .detection import BoundingBox, Detection, nms, soft_nms

__all__ = [
    "Tile",
    "TileGrid",
    "plan_tiles",
    "to_global",
    "merge_tiles",
    "slice_image",
    "tile_annotations",
    "format_grid",
    "parse_grid",
    "GridFormatError",
]


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    x0: int
    y0: int
    width: int
    height: int
    row: int = 0
    col: int = 0

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.x0, self.y0, self.x0 + self.width, self.y0 + self.height)

    def name(self, stem: str) -> str:
        return f"{stem}_r{self.row}_c{self.col}"


@dataclass(frozen=True)
class TileGrid:
    image_width: int
    image_height: int
    tile_size: int
    overlap_fraction: float
    tiles: Tuple[Tile, ...] = field(default_factory=tuple)

    @property
    def shape(self) -> Tuple[int, int]:
        rows = 1 + max(t.row for t in self.tiles)
        cols = 1 + max(t.col for t in self.tiles)
        return rows, cols


def _axis_origins(length: int, tile: int, stride: int) -> List[int]:
    if length <= tile:
        return [0]
    origins = []
    o = 0
    while o + tile < length:
        origins.append(o)
        o += stride
    origins.append(length - tile)  # clamp the last tile onto the far edge
    return origins


def plan_tiles(image_width: int, image_height: int, tile_size: int = 640, overlap_fraction: float = 0.2) -> TileGrid:
    """Lay out a row-major grid of ``tile_size`` squares with the given overlap.

    Origins step by ``floor(tile_size * (1 - overlap_fraction))``; the last
    tile on each axis is pulled back so it ends on the image edge, which can
    only enlarge its overlap with the previous one.  An axis shorter than the
    tile gets one tile spanning that axis.
    """
    if image_width <= 0 or image_height <= 0:
        raise ValueError(f"image dimensions must be positive, got {image_width}x{image_height}")
    if tile_size <= 0:
        raise ValueError(f"tile_size must be positive, got {tile_size}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    # the epsilon keeps e.g. 640 * 0.8 from flooring to 511
    stride = max(1, math.floor(tile_size * (1.0 - overlap_fraction) + 1e-9))
    xs = _axis_origins(image_width, tile_size, stride)
    ys = _axis_origins(image_height, tile_size, stride)
    tw, th = min(tile_size, image_width), min(tile_size, image_height)
    tiles = tuple(
        Tile(x0, y0, tw, th, row=r, col=c) for r, y0 in enumerate(ys) for c, x0 in enumerate(xs)
    )
    return TileGrid(image_width, image_height, tile_size, overlap_fraction, tiles)


def to_global(det: Detection, tile: Tile) -> Detection:
    return Detection(det.box.translate(tile.x0, tile.y0), det.confidence, det.class_id)


def merge_tiles(
    per_tile: Iterable[Tuple[Tile, Sequence[Detection]]],
    grid: TileGrid | None = None,
    suppression: str = "nms",
    iou_threshold: float = 0.5,
    sigma: float = 0.5,
    score_threshold: float = 0.001,
) -> List[Detection]:
    """Remap per-tile detections to image coordinates and remove cross-tile duplicates.

    ``suppression`` is ``"nms"`` (default), ``"gaussian"`` / ``"linear"``
    for Soft-NMS, or ``"off"``.
    """
    tiles = set(grid.tiles) if grid is not None else None
    pooled: List[Detection] = []
    for tile, dets in per_tile:
        if tiles is not None and tile not in tiles:
            raise ValueError(f"tile {tile} is not part of the grid")
        pooled.extend(to_global(d, tile) for d in dets)
    if suppression == "nms":
        return nms(pooled, iou_threshold)
    if suppression in ("gaussian", "linear"):
        return soft_nms(pooled, suppression, sigma, iou_threshold, score_threshold)
    if suppression == "off":
        return sorted(pooled, key=lambda d: -d.confidence)
    raise ValueError(f"unknown suppression {suppression!r}")


def tile_annotations(boxes: Sequence[BoundingBox], tile: Tile) -> List[BoundingBox]:
    """Ground-truth boxes fully inside ``tile``, in tile-local pixels.

    Partially covered objects are left to the neighbouring tile that holds
    them whole; with a 20% overlap any object up to the overlap width is
    whole in at least one tile.
    """
    frame = tile.box
    return [b.translate(-tile.x0, -tile.y0) for b in boxes if frame.contains(b)]


def slice_image(pixels: np.ndarray, grid: TileGrid) -> List[np.ndarray]:
    """Crop ``pixels`` (H x W) into the grid's tiles, row-major."""
    h, w = pixels.shape[:2]
    if (w, h) != (grid.image_width, grid.image_height):
        raise ValueError(f"image is {w}x{h}, grid expects {grid.image_width}x{grid.image_height}")
    return [pixels[t.y0 : t.y0 + t.height, t.x0 : t.x0 + t.width].copy() for t in grid.tiles]


# Grid manifest: a header of key/value pairs, then one line per tile:
#   tile <row> <col> <x0> <y0> <width> <height> <name>


def format_grid(grid: TileGrid, stem: str) -> str:
    lines = [
        "# aphidcount tile grid",
        f"stem {stem}",
        f"image_width {grid.image_width}",
        f"image_height {grid.image_height}",
        f"tile_size {grid.tile_size}",
        f"overlap {grid.overlap_fraction!r}",
    ]
    lines += [f"tile {t.row} {t.col} {t.x0} {t.y0} {t.width} {t.height} {t.name(stem)}" for t in grid.tiles]
    return "\n".join(lines) + "\n"


def parse_grid(text: str) -> Tuple[TileGrid, str, List[str]]:
    """Inverse of :func:`format_grid`; returns (grid, stem, per-tile names)."""
    header = {}
    tiles, names = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "tile":
                if len(parts) != 8:
                    raise ValueError("tile line needs 7 fields")
                r, c, x0, y0, w, h = (int(p) for p in parts[1:7])
                tiles.append(Tile(x0, y0, w, h, row=r, col=c))
                names.append(parts[7])
            elif len(parts) == 2:
                header[parts[0]] = parts[1]
            else:
                raise ValueError(f"unrecognised line {line!r}")
        except ValueError as exc:
            raise GridFormatError(f"line {lineno}: {exc}") from None
    missing = {"stem", "image_width", "image_height", "tile_size", "overlap"} - header.keys()
    if missing:
        raise GridFormatError(f"missing header keys: {', '.join(sorted(missing))}")
    if not tiles:
        raise GridFormatError("grid lists no tiles")
    try:
        grid = TileGrid(
            int(header["image_width"]),
            int(header["image_height"]),
            int(header["tile_size"]),
            float(header["overlap"]),
            tuple(tiles),
        )
    except ValueError as exc:
        raise GridFormatError(str(exc)) from None
    for t in grid.tiles:
        if t.x0 < 0 or t.y0 < 0 or t.x0 + t.width > grid.image_width or t.y0 + t.height > grid.image_height:
            raise GridFormatError(f"tile {t.name(header['stem'])} lies outside the image")
    return grid, header["stem"], names
