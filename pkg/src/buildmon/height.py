"""
Building height from shadow geometry.

The shadow is measured by casting rays from the footprint edge in the
anti-solar direction; height follows from ``shadow_length * tan(elevation)``.
Satellite off-nadir viewing is not corrected for (near-nadir imagery assumed).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from buildmon.annotations import MaskGrid, rasterize_polygon
from buildmon.errors import InvalidArgumentError, MissingMetadataError
from buildmon.raster import ChannelKind, RasterImage, SunMetadata

STEP = 0.5  # ray sampling step, pixels
MAX_GAP = 2  # consecutive non-shadow samples that end a ray


class EmptyShadowWarning(UserWarning):
    """No shadow pixels were found along any ray."""


class HeightMethod(str, Enum):
    SHADOW_MASK = "SHADOW_MASK"
    NIR_THRESHOLD = "NIR_THRESHOLD"


@dataclass(frozen=True)
class HeightEstimate:
    shadow_length_m: float
    height_m: float
    floors: int
    method: HeightMethod = HeightMethod.SHADOW_MASK

    def to_json(self, footprint_id=0) -> dict:
        return {
            "footprint_id": footprint_id,
            "shadow_length_m": self.shadow_length_m,
            "height_m": self.height_m,
            "floors": self.floors,
            "method": HeightMethod(self.method).value,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HeightEstimate":
        return cls(doc["shadow_length_m"], doc["height_m"], doc["floors"], HeightMethod(doc["method"]))


def anti_solar_direction(sun: SunMetadata) -> np.ndarray:
    """Unit (dx, dy) in image coordinates (x east, y south) pointing away from the sun."""
    az = math.radians(sun.azimuth_deg)
    return np.array([-math.sin(az), math.cos(az)])


def _bool_grid(mask) -> np.ndarray:
    values = np.asarray(getattr(mask, "values", mask))
    return values if values.dtype == bool else values >= 0.5


def shadow_rays(shadow, footprint, sun: SunMetadata) -> np.ndarray:
    """Shadow length in pixels along each ray leaving the footprint's shadow side."""
    if sun is None:
        raise MissingMetadataError("shadow measurement needs sun azimuth and elevation")
    shadow = _bool_grid(shadow)
    height, width = shadow.shape
    inside = rasterize_polygon(footprint, width, height).as_bool()
    if not inside.any():
        raise InvalidArgumentError("footprint covers no pixel centres")
    d = anti_solar_direction(sun)

    rows, cols = np.nonzero(inside)
    cx, cy = cols + 0.5, rows + 0.5
    nx, ny = np.floor(cx + d[0]).astype(int), np.floor(cy + d[1]).astype(int)
    in_img = (nx >= 0) & (nx < width) & (ny >= 0) & (ny < height)
    leaves = ~in_img
    leaves[in_img] = ~inside[ny[in_img], nx[in_img]]
    cx, cy = cx[leaves], cy[leaves]

    n_steps = int(math.ceil(math.hypot(width, height) / STEP)) + 2
    t = STEP * np.arange(1, n_steps + 1)
    xs = np.floor(cx[:, None] + t[None, :] * d[0]).astype(int)
    ys = np.floor(cy[:, None] + t[None, :] * d[1]).astype(int)
    valid = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    xs_c, ys_c = np.clip(xs, 0, width - 1), np.clip(ys, 0, height - 1)
    in_fp = inside[ys_c, xs_c] & valid
    in_sh = shadow[ys_c, xs_c] & valid

    lengths = np.zeros(len(cx))
    for k in range(len(cx)):
        outside = np.flatnonzero(~in_fp[k])
        if outside.size == 0:
            continue
        start = outside[0]
        stop = np.flatnonzero(~valid[k, start:])
        end = start + (stop[0] if stop.size else n_steps - start)
        run = in_sh[k, start:end]
        gap_runs = np.convolve(~run, np.ones(MAX_GAP, dtype=int), mode="valid")
        gaps = np.flatnonzero(gap_runs == MAX_GAP)
        if gaps.size:
            run = run[: gaps[0]]
        hits = np.flatnonzero(run)
        if hits.size:
            lengths[k] = (hits[-1] + 1) * STEP
    return lengths


def shadow_length(shadow, footprint, sun: SunMetadata, resolution: float) -> float:
    """Median shadow length in metres over rays cast from the footprint edge.

    Warns with :class:`EmptyShadowWarning` and returns 0.0 when no ray meets shadow.
    """
    if resolution <= 0:
        raise InvalidArgumentError("resolution must be positive")
    lengths = shadow_rays(shadow, footprint, sun)
    if lengths.size == 0 or not np.any(lengths > 0):
        warnings.warn("no shadow found next to the footprint", EmptyShadowWarning, stacklevel=2)
        return 0.0
    return float(np.median(lengths)) * resolution


def tan_degrees(angle_deg: float) -> float:
    # math.tan(math.radians(45)) is 0.9999999999999999
    if angle_deg == 45.0:
        return 1.0
    return math.tan(math.radians(angle_deg))


def height_from_shadow(shadow_length_m: float, sun: SunMetadata) -> float:
    if shadow_length_m < 0:
        raise InvalidArgumentError("shadow length must be non-negative")
    return shadow_length_m * tan_degrees(sun.elevation_deg)


def floors_from_height(height_m: float, floor_height_m: float = 3.0) -> int:
    if floor_height_m <= 0:
        raise InvalidArgumentError("floor height must be positive")
    return max(0, int(math.floor(height_m / floor_height_m + 0.5)))


def nir_shadow_baseline(nir, threshold: float) -> MaskGrid:
    """Shadow mask from NIR darkness: 1 where the NIR value is at most ``threshold``.

    ``nir`` is either a RasterImage carrying a NIR channel or a bare 2-D plane.
    """
    if isinstance(nir, RasterImage):
        if not nir.has_channel(ChannelKind.NIR):
            raise MissingMetadataError("image has no NIR channel")
        nir = nir.channel(ChannelKind.NIR)
    plane = np.asarray(nir, dtype=np.float64)
    return MaskGrid((plane <= threshold).astype(np.float64))


def estimate_height(shadow, footprint, sun: Optional[SunMetadata], resolution: float,
                    floor_height_m: float = 3.0,
                    method: HeightMethod = HeightMethod.SHADOW_MASK) -> HeightEstimate:
    if sun is None:
        raise MissingMetadataError("height estimation needs sun metadata")
    length = shadow_length(shadow, footprint, sun, resolution)
    height = height_from_shadow(length, sun)
    return HeightEstimate(length, height, floors_from_height(height, floor_height_m), HeightMethod(method))
