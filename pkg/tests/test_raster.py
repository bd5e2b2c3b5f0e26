import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from buildmon.errors import InvalidArgumentError, MissingMetadataError, ParseError
from buildmon.raster import (
    RasterImage,
    SunMetadata,
    degrade_resolution,
    load_image,
    predict_tiled,
    read_png,
    save_image,
    sidecar_path,
    stitch_probabilities,
    tile_scene,
    write_png,
)
from conftest import make_image


def origins(tiles):
    return sorted({t.origin for t in tiles})


def test_sun_metadata_rejects_horizon_and_zenith():
    for el in (0.0, 90.0, -5.0, 120.0):
        with pytest.raises(InvalidArgumentError):
            SunMetadata(180.0, el)
    assert SunMetadata(370.0, 30.0).azimuth_deg == 10.0


def test_raster_image_invariants():
    with pytest.raises(InvalidArgumentError):
        RasterImage(np.full((1, 2, 2), 1.5), ("RED",), 1.0)
    with pytest.raises(InvalidArgumentError):
        RasterImage(np.zeros((1, 2, 2)), ("RED",), 0.0)
    with pytest.raises(InvalidArgumentError):
        RasterImage(np.zeros((2, 2, 2)), ("RED",), 1.0)
    img = make_image()
    assert (img.width, img.height) == (8, 6)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 0.5


# --- tiling -------------------------------------------------------------------------

def test_single_tile_identity():
    img = make_image(100, 100)
    tiles = tile_scene(img, 100, 0)
    assert [t.origin for t in tiles] == [(0, 0)]
    assert_array_equal(tiles[0].image.data, img.data)


def test_tiles_with_overlap():
    tiles = tile_scene(make_image(100, 100), 60, 20)
    assert len(tiles) == 4
    assert origins(tiles) == [(0, 0), (0, 40), (40, 0), (40, 40)]


def test_last_tile_shifted_inward():
    tiles = tile_scene(make_image(250, 130), 128, 0)
    assert [t.origin for t in tiles] == [(0, 0), (122, 0), (0, 2), (122, 2)]
    assert all(t.image.width == t.image.height == 128 for t in tiles)


def test_tile_errors():
    img = make_image(50, 40)
    with pytest.raises(InvalidArgumentError):
        tile_scene(img, 41)
    with pytest.raises(InvalidArgumentError):
        tile_scene(img, 10, 10)
    with pytest.raises(InvalidArgumentError):
        tile_scene(img, 10, -1)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 70), st.integers(1, 70), st.data())
def test_tiles_cover_scene(width, height, data):
    tile = data.draw(st.integers(1, min(width, height)))
    overlap = data.draw(st.integers(0, tile - 1))
    img = RasterImage(np.zeros((1, height, width)), ("RED",), 1.0)
    tiles = tile_scene(img, tile, overlap)
    covered = np.zeros((height, width), dtype=bool)
    for t in tiles:
        assert t.x >= 0 and t.y >= 0
        assert t.x + tile <= width and t.y + tile <= height
        covered[t.y : t.y + tile, t.x : t.x + tile] = True
    assert covered.all()
    keys = [(t.y, t.x) for t in tiles]
    assert keys == sorted(keys)


# --- degradation -----------------------------------------------------------------

def test_degrade_identity():
    img = make_image(10, 10, resolution=0.3)
    assert degrade_resolution(img, 0.3) is img


def test_degrade_halves_against_2x2_average():
    img = make_image(100, 100, resolution=0.3)
    out = degrade_resolution(img, 0.6)
    assert (out.width, out.height) == (50, 50)
    assert out.resolution == 0.6
    expected = img.data.reshape(3, 50, 2, 50, 2).mean(axis=(2, 4))
    assert_allclose(out.data, expected, atol=1e-12)


def test_degrade_non_integer_ratio_shape():
    # 0.3 -> 0.7: 100 * 3/7 = 42.86 -> 43, 30 * 3/7 = 12.86 -> 13
    out = degrade_resolution(make_image(100, 30, resolution=0.3), 0.7)
    assert (out.width, out.height) == (43, 13)


def test_degrade_constant_and_minimum_size():
    img = make_image(7, 5, value=0.42, resolution=1.0)
    out = degrade_resolution(img, 100.0)
    assert (out.width, out.height) == (1, 1)
    assert_allclose(out.data, 0.42)
    assert_allclose(degrade_resolution(img, 1.7).data, 0.42)


def test_degrade_rejects_upsampling():
    with pytest.raises(InvalidArgumentError):
        degrade_resolution(make_image(resolution=1.0), 0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_degrade_preserves_mean(h, w, factor, seed):
    data = np.random.default_rng(seed).random((2, h * factor, w * factor))
    img = RasterImage(data, ("RED", "NIR"), 0.25)
    out = degrade_resolution(img, 0.25 * factor)
    assert (out.height, out.width) == (h, w)
    assert abs(out.data.mean() - data.mean()) < 1e-6


# --- stitching -----------------------------------------------------------------------

def test_stitch_single_tile():
    grid = np.random.default_rng(1).random((5, 7))
    out, covered = stitch_probabilities([((0, 0), grid)], 5, 7)
    assert_array_equal(out, grid)
    assert covered.all()


def test_stitch_overlap_mean_and_coverage():
    a = np.full((2, 2), 0.2)
    b = np.full((2, 2), 0.8)
    out, covered = stitch_probabilities([((0, 0), a), ((1, 1), b)], 4, 4)
    assert out[1, 1] == pytest.approx(0.5)
    assert out[0, 0] == pytest.approx(0.2)
    assert out[2, 2] == pytest.approx(0.8)
    assert not covered[3, 3] and out[3, 3] == 0.0
    assert covered.sum() == 7


def test_stitch_identical_overlap():
    g = np.full((3, 3), 0.3)
    out, _ = stitch_probabilities([((0, 0), g), ((1, 0), g)], 3, 4)
    assert_allclose(out, 0.3)


def test_stitch_out_of_bounds():
    with pytest.raises(InvalidArgumentError):
        stitch_probabilities([((3, 0), np.zeros((2, 2)))], 4, 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 40), st.integers(4, 40), st.data())
def test_constant_model_round_trip(width, height, data):
    tile = data.draw(st.integers(1, min(width, height)))
    overlap = data.draw(st.integers(0, tile - 1))
    img = RasterImage(np.zeros((1, height, width)), ("RED",), 1.0)
    out = predict_tiled(lambda t: np.full((t.height, t.width), 0.37), img, tile, overlap)
    assert_allclose(out, 0.37)


# --- IO ------------------------------------------------------------------------------

@pytest.mark.parametrize("bitdepth", [8, 16])
@pytest.mark.parametrize("channels", [("NIR",), ("RED", "NIR"), ("RED", "GREEN", "BLUE"),
                                      ("RED", "GREEN", "BLUE", "NIR")])
def test_png_round_trip(tmp_path, bitdepth, channels):
    img = make_image(9, 4, channels=channels, sun=SunMetadata(135.0, 30.0))
    path = tmp_path / "scene.png"
    save_image(path, img, bitdepth)
    back = load_image(path)
    assert back.channels == img.channels
    assert back.sun == img.sun and back.resolution == img.resolution
    assert_allclose(back.data, img.data, atol=0.5 / (2**bitdepth - 1) + 1e-12)


def test_load_image_errors(tmp_path):
    path = tmp_path / "a.png"
    with pytest.raises(FileNotFoundError):
        load_image(path)
    write_png(path, np.zeros((3, 2, 2)))
    with pytest.raises(MissingMetadataError):
        load_image(path)
    meta = {"resolution_m_per_px": 1.0, "sun_azimuth_deg": 10.0, "sun_elevation_deg": None,
            "channels": ["RED", "GREEN", "BLUE"]}
    sidecar_path(path).write_text(json.dumps(meta))
    with pytest.raises(ParseError):
        load_image(path)
    meta["sun_azimuth_deg"] = None
    meta["extra"] = 1
    sidecar_path(path).write_text(json.dumps(meta))
    with pytest.raises(ParseError):
        load_image(path)
    del meta["extra"]
    meta["channels"] = ["RED"]
    sidecar_path(path).write_text(json.dumps(meta))
    with pytest.raises(ParseError):
        load_image(path)
    meta["channels"] = ["RED", "GREEN", "BLUE"]
    sidecar_path(path).write_text(json.dumps(meta))
    assert load_image(path).sun is None


def test_sixteen_bit_scaling(tmp_path):
    path = tmp_path / "g.png"
    write_png(path, np.array([[0.0, 1.0]]), bitdepth=16)
    assert_allclose(read_png(path), [[[0.0, 1.0]]])
