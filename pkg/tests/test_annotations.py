import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from buildmon.annotations import (
    BBOX_STAGES,
    SEGMENTATION_STAGES,
    BBox,
    LabelKind,
    MaskGrid,
    SceneAnnotation,
    Stage,
    as_polygon,
    load_dataset,
    load_predictions,
    polygon_area,
    rasterize_polygon,
    rasterize_polygons,
    save_dataset,
    save_detections,
    ScenePrediction,
)
from buildmon.errors import ParseError, ValidationError
from buildmon.raster import save_image
from conftest import make_image


def brute_force_raster(ring, width, height):
    """Ray-crossing test one pixel centre at a time."""
    ring = [tuple(map(float, p)) for p in ring]
    out = np.zeros((height, width))
    for r in range(height):
        for c in range(width):
            x, y = c + 0.5, r + 0.5
            inside = False
            for k in range(len(ring)):
                (ax, ay), (bx, by) = ring[k], ring[(k + 1) % len(ring)]
                if (ay > y) != (by > y):
                    if x < ax + (y - ay) * (bx - ax) / (by - ay):
                        inside = not inside
            out[r, c] = inside
    return out


def test_stage_codes_and_label_kinds():
    assert [s.value for s in Stage] == list(range(7))
    assert {int(s) for s in BBOX_STAGES} == {0, 1, 2, 3, 5}
    assert {int(s) for s in SEGMENTATION_STAGES} == {4, 6}
    assert Stage.BUILDING_FRAME.label_kind is LabelKind.SEGMENTATION
    assert Stage.parse("roof_completed_house") is Stage.ROOF_COMPLETED_HOUSE
    assert Stage.parse("Landscaping") is Stage.LANDSCAPING
    assert Stage.parse(2) is Stage.FOUNDATION
    with pytest.raises(ValueError):
        Stage.parse("garage")


def test_bbox_validation():
    with pytest.raises(ValidationError):
        BBox(1, 0, 1, 2)
    with pytest.raises(ValidationError):
        BBox(0, 0, 1, 1, score=1.2)
    box = BBox(0, 0, 2, 3, 0.4, 2)
    assert box.area == 6 and box.stage is Stage.FOUNDATION
    assert BBox.from_json(box.to_json(with_score=True)) == box


# --- rasterization ------------------------------------------------------------------

def test_full_square():
    m = rasterize_polygon([[0, 0], [10, 0], [10, 10], [0, 10]], 10, 10)
    assert m.values.sum() == 100


def test_left_half():
    m = rasterize_polygon([[0, 0], [5, 0], [5, 8], [0, 8]], 10, 8)
    assert m.values.sum() == 10 * 8 / 2
    assert m.values[:, :5].all() and not m.values[:, 5:].any()


def test_right_triangle_area():
    tri = [[0, 0], [20, 0], [0, 20]]
    m = rasterize_polygon(tri, 20, 20)
    assert_array_equal(m.values, brute_force_raster(tri, 20, 20))
    assert abs(m.values.sum() - 200) <= 0.05 * 200
    # the hypotenuse passes through no pixel centre: 20+19+...+1 minus the diagonal
    assert m.values.sum() == 190


def test_area_converges_with_resolution():
    tri = np.array([[1.0, 1.0], [9.3, 2.2], [4.1, 8.7]])
    exact = polygon_area(tri)
    errors = []
    for scale in (4, 32):
        m = rasterize_polygon(tri * scale, 10 * scale, 10 * scale)
        errors.append(abs(m.values.sum() / scale**2 - exact) / exact)
    assert errors[1] < errors[0]
    assert errors[1] < 0.01


def test_closed_and_open_rings_agree():
    ring = [[1, 1], [6, 1], [6, 4], [1, 4]]
    assert rasterize_polygon(ring, 8, 8) == rasterize_polygon(ring + [ring[0]], 8, 8)


@pytest.mark.parametrize("ring", [
    [[0, 0], [4, 4], [4, 0], [0, 4]],          # bow tie
    [[0, 0], [4, 0], [4, 4], [2, 0], [0, 4]],  # vertex touching an edge
    [[0, 0], [4, 0], [2, 0], [2, 3]],          # edge folding back
    [[0, 0], [1, 1]],
    [[0, 0], [1, 1], [2, 2]],                  # zero area
])
def test_invalid_polygons_rejected(ring):
    with pytest.raises(ValidationError):
        as_polygon(ring)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 12), st.floats(0, 12)), min_size=3, max_size=3),
       st.integers(1, 14), st.integers(1, 14))
def test_triangles_match_brute_force(points, width, height):
    try:
        ring = as_polygon(points)
    except ValidationError:
        return
    assert_array_equal(rasterize_polygon(ring, width, height).values,
                       brute_force_raster(ring, width, height))


# --- dataset IO -----------------------------------------------------------------------

def write_manifest(path, scenes):
    path.write_text(json.dumps({"scenes": scenes}))
    return path


def test_empty_manifest(tmp_path):
    assert load_dataset(write_manifest(tmp_path / "m.json", [])) == []


def test_one_box_round_trip(tmp_path):
    save_image(tmp_path / "a.png", make_image(16, 12))
    box = {"stage": 1, "x_min": 1, "y_min": 2, "x_max": 5, "y_max": 6}
    manifest = write_manifest(tmp_path / "m.json",
                              [{"id": "a", "image": "a.png", "annotations": {"boxes": [box]}}])
    [(image, ann)] = load_dataset(manifest)
    assert (image.width, image.height) == (16, 12)
    assert ann.boxes == [BBox(1, 2, 5, 6, 1.0, Stage.EXCAVATION)]


@pytest.mark.parametrize("box, error", [
    ({"stage": 1, "x_min": 3, "y_min": 2, "x_max": 3, "y_max": 6}, ValidationError),
    ({"stage": 1, "x_min": 3, "y_min": 2, "x_max": 30, "y_max": 6}, ValidationError),
    ({"stage": 9, "x_min": 3, "y_min": 2, "x_max": 5, "y_max": 6}, ParseError),
    ({"stage": 1, "x_min": 3, "y_min": 2, "x_max": 5}, ParseError),
])
def test_bad_records_name_the_scene(tmp_path, box, error):
    save_image(tmp_path / "a.png", make_image(16, 12))
    manifest = write_manifest(tmp_path / "m.json", [
        {"id": "ok", "image": "a.png"},
        {"id": "broken", "image": "a.png", "annotations": {"boxes": [box]}},
    ])
    with pytest.raises(error, match="broken|scenes/1"):
        load_dataset(manifest)


def test_self_intersecting_mask_polygon(tmp_path):
    save_image(tmp_path / "a.png", make_image(16, 12))
    mask = {"stage": 4, "polygon": [[0, 0], [4, 4], [4, 0], [0, 4]]}
    manifest = write_manifest(tmp_path / "m.json",
                              [{"id": "a", "image": "a.png", "annotations": {"masks": [mask]}}])
    with pytest.raises(ValidationError, match="self-intersecting"):
        load_dataset(manifest)


def test_missing_image(tmp_path):
    manifest = write_manifest(tmp_path / "m.json", [{"id": "a", "image": "nope.png"}])
    with pytest.raises(FileNotFoundError):
        load_dataset(manifest)


def test_save_load_round_trip(tmp_path):
    save_image(tmp_path / "a.png", make_image(16, 12))
    save_image(tmp_path / "b.png", make_image(16, 12))
    anns = [
        SceneAnnotation(
            "a",
            boxes=[BBox(0.5, 1, 4, 6.25, 1.0, 0), BBox(2, 2, 9, 9, 1.0, 5)],
            masks=[rasterize_polygon([[1, 1], [9, 2], [4, 10]], 16, 12, Stage.BUILDING_FRAME),
                   rasterize_polygons([[[0, 0], [3, 0], [3, 3]]], 16, 12, Stage.LANDSCAPING)],
            footprints=[[[2, 2], [8, 2], [8, 7], [2, 7]]],
        ),
        SceneAnnotation("b"),
    ]
    save_dataset(tmp_path / "manifest.json", [(tmp_path / "a.png", anns[0]), (tmp_path / "b.png", anns[1])])
    loaded = [ann for _, ann in load_dataset(tmp_path / "manifest.json")]
    assert loaded == anns


def test_ground_truth_boxes_carry_unit_score():
    with pytest.raises(ValidationError):
        SceneAnnotation("a", boxes=[BBox(0, 0, 1, 1, 0.5)])


def test_mask_grid_invariants():
    with pytest.raises(ValidationError):
        MaskGrid(np.array([[1.5]]))
    m = MaskGrid([[0.2, 0.5]], 4)
    assert m.stage is Stage.BUILDING_FRAME and not m.is_binary
    assert_array_equal(m.as_bool(), [[False, True]])


def test_predictions_round_trip(tmp_path):
    preds = [ScenePrediction("a", [BBox(1, 1, 3, 3, 0.7, 2)])]
    save_detections(tmp_path / "p.json", preds)
    loaded = load_predictions(tmp_path / "p.json")
    assert loaded["a"].detections == preds[0].detections
