"""
Raster ingestion, tiling, resolution degradation and tile stitching.

Pixel data is held channel-first as ``(channels, height, width)`` float64
arrays normalized to [0, 1]. Probability grids are plain ``(height, width)``
arrays.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
import png

from buildmon.errors import InvalidArgumentError, MissingMetadataError, ParseError


class ChannelKind(str, Enum):
    RED = "RED"
    GREEN = "GREEN"
    BLUE = "BLUE"
    NIR = "NIR"


@dataclass(frozen=True)
class SunMetadata:
    """Sun position at acquisition time.

    ``azimuth_deg`` is clockwise from north, ``elevation_deg`` is above the
    horizon and must lie strictly inside (0, 90).
    """

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        az = float(self.azimuth_deg)
        el = float(self.elevation_deg)
        if not math.isfinite(az) or not math.isfinite(el):
            raise InvalidArgumentError("sun angles must be finite")
        if not 0.0 < el < 90.0:
            raise InvalidArgumentError(
                f"sun elevation must be strictly inside (0, 90), got {el}"
            )
        object.__setattr__(self, "azimuth_deg", az % 360.0)
        object.__setattr__(self, "elevation_deg", el)


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Multi-channel image with ground resolution and optional sun metadata."""

    data: np.ndarray
    channels: tuple
    resolution: float
    sun: Optional[SunMetadata] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise InvalidArgumentError("pixel data must be (channels, height, width)")
        channels = tuple(ChannelKind(c) for c in self.channels)
        if len(channels) != data.shape[0]:
            raise InvalidArgumentError(
                f"{len(channels)} channel names for {data.shape[0]} planes"
            )
        if len(set(channels)) != len(channels):
            raise InvalidArgumentError("duplicate channel kinds")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise InvalidArgumentError("image must be at least 1x1")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise InvalidArgumentError("pixel values must lie in [0, 1]")
        resolution = float(self.resolution)
        if not resolution > 0.0 or not math.isfinite(resolution):
            raise InvalidArgumentError("resolution must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "resolution", resolution)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def has_channel(self, kind) -> bool:
        return ChannelKind(kind) in self.channels

    def channel(self, kind) -> np.ndarray:
        kind = ChannelKind(kind)
        if kind not in self.channels:
            raise MissingMetadataError(f"image has no {kind.value} channel")
        return self.data[self.channels.index(kind)]

    def crop(self, x: int, y: int, width: int, height: int) -> "RasterImage":
        return RasterImage(
            self.data[:, y : y + height, x : x + width],
            self.channels,
            self.resolution,
            self.sun,
        )

    def rgb(self) -> np.ndarray:
        """(height, width, 3) array for display; missing colour planes reuse the first plane."""
        planes = []
        for kind in (ChannelKind.RED, ChannelKind.GREEN, ChannelKind.BLUE):
            planes.append(self.channel(kind) if kind in self.channels else self.data[0])
        return np.stack(planes, axis=-1)


@dataclass(frozen=True)
class Tile:
    origin: tuple
    image: RasterImage
    parent_id: str = ""

    @property
    def x(self) -> int:
        return self.origin[0]

    @property
    def y(self) -> int:
        return self.origin[1]


def _tile_origins(length: int, tile_size: int, stride: int) -> list:
    origins = list(range(0, length - tile_size + 1, stride))
    if origins[-1] != length - tile_size:
        # shift the last tile inward so every tile is full size
        origins.append(length - tile_size)
    return origins


def tile_scene(scene: RasterImage, tile_size: int, overlap: int = 0,
               parent_id: str = "") -> list:
    """Cut a scene into equal-size square tiles, row-major.

    Tiles advance by ``tile_size - overlap``; the last row and column are
    shifted inward rather than padded.
    """
    tile_size = int(tile_size)
    overlap = int(overlap)
    if not 0 <= overlap < tile_size:
        raise InvalidArgumentError("need 0 <= overlap < tile_size")
    if tile_size > min(scene.width, scene.height):
        raise InvalidArgumentError(
            f"tile_size {tile_size} exceeds scene size {scene.width}x{scene.height}"
        )
    stride = tile_size - overlap
    xs = _tile_origins(scene.width, tile_size, stride)
    ys = _tile_origins(scene.height, tile_size, stride)
    return [
        Tile((x, y), scene.crop(x, y, tile_size, tile_size), parent_id)
        for y in ys
        for x in xs
    ]


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-normalized area-overlap matrix mapping n_in samples onto n_out."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    lo = np.arange(n_in)
    hi = lo + 1
    overlap = np.clip(
        np.minimum(edges[1:, None], hi[None, :]) - np.maximum(edges[:-1, None], lo[None, :]),
        0.0,
        None,
    )
    return overlap / overlap.sum(axis=1, keepdims=True)


def box_resample(grid: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Area-average a 2-D (or channel-first 3-D) grid to a smaller size."""
    grid = np.asarray(grid, dtype=np.float64)
    wy = _box_weights(grid.shape[-2], out_height)
    wx = _box_weights(grid.shape[-1], out_width)
    return wy @ grid @ wx.T


def degraded_shape(height: int, width: int, source_res: float, target_res: float) -> tuple:
    scale = source_res / target_res
    return (max(1, _round_half_up(height * scale)), max(1, _round_half_up(width * scale)))


def degrade_resolution(image: RasterImage, target_resolution: float) -> RasterImage:
    """Simulate coarser imagery with a box filter. Upsampling is rejected."""
    target_resolution = float(target_resolution)
    if target_resolution < image.resolution:
        raise InvalidArgumentError(
            f"target resolution {target_resolution} m/px is finer than source "
            f"{image.resolution} m/px; upsampling is not supported"
        )
    if target_resolution == image.resolution:
        return image
    h, w = degraded_shape(image.height, image.width, image.resolution, target_resolution)
    data = np.clip(box_resample(image.data, h, w), 0.0, 1.0)
    return RasterImage(data, image.channels, target_resolution, image.sun)


def stitch_probabilities(tiles: Iterable, height: int, width: int):
    """Average overlapping tile predictions back into scene space.

    ``tiles`` yields ``((x, y), grid)`` pairs. Returns ``(grid, covered)``;
    uncovered pixels are 0 and False in the coverage mask.
    """
    total = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.int64)
    for (x, y), grid in tiles:
        grid = np.asarray(grid, dtype=np.float64)
        th, tw = grid.shape
        if x < 0 or y < 0 or x + tw > width or y + th > height:
            raise InvalidArgumentError(
                f"tile at ({x}, {y}) of size {tw}x{th} exceeds scene {width}x{height}"
            )
        total[y : y + th, x : x + tw] += grid
        count[y : y + th, x : x + tw] += 1
    covered = count > 0
    out = np.zeros_like(total)
    out[covered] = total[covered] / count[covered]
    return out, covered


def predict_tiled(predict: Callable, scene: RasterImage, tile_size: int,
                  overlap: int = 0) -> np.ndarray:
    """Run ``predict(tile_image) -> grid`` over all tiles and stitch the result."""
    tiles = tile_scene(scene, tile_size, overlap)
    grid, _ = stitch_probabilities(
        ((t.origin, predict(t.image)) for t in tiles), scene.height, scene.width
    )
    return grid


# --- PNG + sidecar IO -------------------------------------------------------

def sidecar_path(image_path) -> Path:
    p = Path(image_path)
    return p.with_name(p.stem + ".meta.json")


def read_png(path) -> np.ndarray:
    """Read any 8/16-bit PNG into a (planes, height, width) float array in [0, 1]."""
    reader = png.Reader(filename=str(path))
    width, height, rows, info = reader.asDirect()
    planes = info["planes"]
    arr = np.vstack([np.asarray(row, dtype=np.float64) for row in rows])
    arr = arr.reshape(height, width, planes) / float(2 ** info["bitdepth"] - 1)
    return np.moveaxis(arr, -1, 0)


def write_png(path, planes: np.ndarray, bitdepth: int = 8):
    """Write a (planes, height, width) or (height, width) array in [0, 1] as PNG."""
    arr = np.asarray(planes, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    n, height, width = arr.shape
    if n not in (1, 2, 3, 4):
        raise InvalidArgumentError("PNG supports 1 to 4 planes")
    maxval = 2 ** bitdepth - 1
    ints = np.rint(np.clip(arr, 0.0, 1.0) * maxval).astype(np.uint16 if bitdepth > 8 else np.uint8)
    rows = np.moveaxis(ints, 0, -1).reshape(height, width * n)
    writer = png.Writer(width, height, greyscale=n in (1, 2), alpha=n in (2, 4),
                        bitdepth=bitdepth)
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        writer.write(fh, rows.tolist())
    os.replace(tmp, path)


def load_image(path) -> RasterImage:
    """Load a PNG and its ``<name>.meta.json`` sidecar."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise MissingMetadataError(f"missing sidecar metadata file {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from exc
    unknown = set(meta) - {"resolution_m_per_px", "sun_azimuth_deg", "sun_elevation_deg", "channels"}
    if unknown:
        raise ParseError(f"{meta_path}: unknown keys {sorted(unknown)}")
    try:
        resolution = float(meta["resolution_m_per_px"])
        channels = list(meta["channels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{meta_path}: bad or missing field {exc}") from exc
    az, el = meta.get("sun_azimuth_deg"), meta.get("sun_elevation_deg")
    if (az is None) != (el is None):
        raise ParseError(f"{meta_path}: sun azimuth and elevation must both be set or both null")
    sun = SunMetadata(az, el) if az is not None else None
    data = read_png(path)
    try:
        return RasterImage(data, channels, resolution, sun)
    except (InvalidArgumentError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def save_image(path, image: RasterImage, bitdepth: int = 8):
    """Write ``image`` as PNG plus sidecar metadata."""
    path = Path(path)
    write_png(path, image.data, bitdepth)
    meta = {
        "resolution_m_per_px": image.resolution,
        "sun_azimuth_deg": image.sun.azimuth_deg if image.sun else None,
        "sun_elevation_deg": image.sun.elevation_deg if image.sun else None,
        "channels": [c.value for c in image.channels],
    }
    write_text_atomic(sidecar_path(path), json.dumps(meta, indent=2) + "\n")


def write_text_atomic(path, text: str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)
