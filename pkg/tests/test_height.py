import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from buildmon.errors import InvalidArgumentError, MissingMetadataError
from buildmon.height import (
    EmptyShadowWarning,
    HeightEstimate,
    HeightMethod,
    anti_solar_direction,
    estimate_height,
    floors_from_height,
    height_from_shadow,
    nir_shadow_baseline,
    shadow_length,
    tan_degrees,
)
from buildmon.raster import RasterImage, SunMetadata

SOUTH_SUN = SunMetadata(180.0, 45.0)
BUILDING = [[20, 40], [30, 40], [30, 50], [20, 50]]


def north_shadow(length_px, size=64, building=BUILDING):
    """Shadow rectangle directly north of ``building`` (image y grows southwards)."""
    (x0, y0), (x1, _) = building[0], building[1]
    mask = np.zeros((size, size))
    mask[max(0, y0 - length_px):y0, x0:x1] = 1.0
    return mask


def test_anti_solar_direction():
    np.testing.assert_allclose(anti_solar_direction(SunMetadata(180, 30)), [0, -1], atol=1e-12)
    np.testing.assert_allclose(anti_solar_direction(SunMetadata(90, 30)), [-1, 0], atol=1e-12)


def test_shadow_length_examples():
    shadow = north_shadow(20)
    assert shadow_length(shadow, BUILDING, SOUTH_SUN, 0.5) == 10.0
    assert shadow_length(shadow, BUILDING, SOUTH_SUN, 1.0) == 20.0


def test_empty_shadow_warns():
    with pytest.warns(EmptyShadowWarning):
        assert shadow_length(np.zeros((64, 64)), BUILDING, SOUTH_SUN, 0.5) == 0.0


def test_gap_of_two_samples_ends_the_ray():
    # half-pixel steps along an axis put two samples in every pixel, so a
    # one-row hole is already a two-sample gap and stops the ray there
    shadow = north_shadow(20)
    shadow[30, 20:30] = 0.0
    assert shadow_length(shadow, BUILDING, SOUTH_SUN, 1.0) == 9.0
    # median over the ten rays: two unobstructed side columns do not move it
    shadow = north_shadow(20)
    shadow[30, 21:29] = 0.0
    assert shadow_length(shadow, BUILDING, SOUTH_SUN, 1.0) == 9.0


def test_shadow_west_of_building_for_eastern_sun():
    sun = SunMetadata(90.0, 30.0)
    mask = np.zeros((64, 64))
    mask[40:50, 8:20] = 1.0
    assert shadow_length(mask, BUILDING, sun, 1.0) == 12.0


def test_shadow_requires_sun():
    with pytest.raises(MissingMetadataError):
        shadow_length(north_shadow(5), BUILDING, None, 1.0)
    with pytest.raises(MissingMetadataError):
        estimate_height(north_shadow(5), BUILDING, None, 1.0)


def test_height_from_shadow_examples():
    assert height_from_shadow(12.0, SunMetadata(0, 45)) == 12.0
    assert tan_degrees(45.0) == 1.0
    assert height_from_shadow(0.0, SunMetadata(0, 30)) == 0.0
    assert height_from_shadow(17.3205, SunMetadata(0, 30)) == pytest.approx(10.0, abs=1e-4)
    with pytest.raises(InvalidArgumentError):
        height_from_shadow(-1.0, SOUTH_SUN)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(1, 89), st.floats(1, 89))
def test_height_monotone_and_homogeneous(l1, l2, e1, e2):
    lo, hi = sorted((l1, l2))
    elo, ehi = sorted((e1, e2))
    sun = SunMetadata(0, elo)
    if lo < hi:
        assert height_from_shadow(lo, sun) < height_from_shadow(hi, sun)
    if elo < ehi:
        assert height_from_shadow(lo, sun) < height_from_shadow(lo, SunMetadata(0, ehi))
    assert height_from_shadow(3 * lo, sun) == pytest.approx(3 * height_from_shadow(lo, sun))


def test_floors_examples():
    assert floors_from_height(0.0) == 0
    assert floors_from_height(30.0, 3.0) == 10
    assert floors_from_height(10.5, 3.0) == 4
    assert floors_from_height(4.4, 3.0) == 1
    with pytest.raises(InvalidArgumentError):
        floors_from_height(3.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 300), st.floats(2.0, 5.0))
def test_floors_error_bound(height, floor_h):
    floors = floors_from_height(height, floor_h)
    assert abs(floors * floor_h - height) <= floor_h / 2 + 1e-9


@pytest.mark.parametrize("elevation", [15.0, 30.0, 45.0, 60.0])
@pytest.mark.parametrize("height_m", [3.0, 6.0, 9.5])
def test_synthetic_scene_recovers_height(elevation, height_m):
    resolution = 0.5
    sun = SunMetadata(180.0, elevation)
    length_px = round(height_m / tan_degrees(elevation) / resolution)
    building = [[20, 100], [30, 100], [30, 110], [20, 110]]
    est = estimate_height(north_shadow(length_px, 128, building), building, sun, resolution)
    quantum = resolution * tan_degrees(elevation)
    assert abs(est.height_m - height_m) <= quantum
    assert est.height_m == est.shadow_length_m * tan_degrees(elevation)


def test_nir_baseline_examples():
    nir = np.full((6, 8), 0.8)
    nir[2:4, :] = 0.1
    assert nir_shadow_baseline(nir, 1.0).values.all()
    assert not nir_shadow_baseline(nir, 0.0).values.any()
    expected = np.zeros((6, 8))
    expected[2:4, :] = 1.0
    assert_array_equal(nir_shadow_baseline(nir, 0.3).values, expected)
    image = RasterImage(np.stack([nir, nir]), ("RED", "NIR"), 1.0)
    assert_array_equal(nir_shadow_baseline(image, 0.3).values, expected)
    with pytest.raises(MissingMetadataError):
        nir_shadow_baseline(RasterImage(nir, ("RED",), 1.0), 0.3)


def test_nir_baseline_feeds_height():
    # dark strip north of the building reads as shadow
    nir = np.full((64, 64), 0.8)
    nir[34:40, 20:30] = 0.1
    shadow = nir_shadow_baseline(nir, 0.3)
    est = estimate_height(shadow, BUILDING, SOUTH_SUN, 0.5, method=HeightMethod.NIR_THRESHOLD)
    assert est == HeightEstimate(3.0, 3.0, 1, HeightMethod.NIR_THRESHOLD)
    assert HeightEstimate.from_json(est.to_json("b1")) == est


def test_no_warning_when_shadow_present():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        shadow_length(north_shadow(4), BUILDING, SOUTH_SUN, 1.0)
