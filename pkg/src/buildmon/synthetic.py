"""
Synthetic scenes with analytically known answers.

Three construction sites (blank, completed house with landscaping, frame at
half coverage with a two-floor shadow) plus a pseudo-labeling pool and a
learning-curve table. ``python -m buildmon.synthetic OUTDIR`` writes the
whole set to disk in the package's file formats.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from buildmon.annotations import BBox, SceneAnnotation, Stage, rasterize_polygons, save_dataset
from buildmon.height import tan_degrees
from buildmon.progress import SceneOutputs
from buildmon.raster import RasterImage, SunMetadata, save_image, write_text_atomic

SIZE = 64
RESOLUTION = 0.5
SUN = SunMetadata(azimuth_deg=180.0, elevation_deg=45.0)
FLOOR_HEIGHT = 3.0

SITE = [[12, 12], [52, 12], [52, 52], [12, 52]]
FOOTPRINT = [[20, 32], [36, 32], [36, 48], [20, 48]]
DRIVEWAY = [[26, 48], [30, 48], [30, 52], [26, 52]]
FRAME_HALF = [[12, 32], [52, 32], [52, 52], [12, 52]]


def two_floor_shadow(sun: SunMetadata = SUN, resolution: float = RESOLUTION) -> list:
    """Shadow polygon north of FOOTPRINT for a building of exactly two floors."""
    length_m = 2 * FLOOR_HEIGHT / tan_degrees(sun.elevation_deg)
    length_px = round(length_m / resolution)
    (x0, y0), (x1, _) = FOOTPRINT[0], FOOTPRINT[1]
    return [[x0, y0 - length_px], [x1, y0 - length_px], [x1, y0], [x0, y0]]


FIELD = (0.25, 0.45, 0.20, 0.70)
SOIL = (0.55, 0.45, 0.35, 0.50)
CONCRETE = (0.62, 0.62, 0.60, 0.45)
SHADOW = (0.08, 0.08, 0.10, 0.08)
LAWN = (0.20, 0.55, 0.18, 0.80)
CHANNELS = ("RED", "GREEN", "BLUE", "NIR")


def _paint(canvas, polygons, colour):
    mask = rasterize_polygons(polygons, canvas.shape[2], canvas.shape[1]).as_bool()
    canvas[:, mask] = np.asarray(colour)[:, None]


def _image(layers, sun=SUN) -> RasterImage:
    canvas = np.empty((4, SIZE, SIZE))
    canvas[:] = np.asarray(FIELD)[:, None, None]
    for polygons, colour in layers:
        _paint(canvas, polygons, colour)
    return RasterImage(canvas, CHANNELS, RESOLUTION, sun)


def _scene_docs() -> dict:
    """Scene-outputs documents (without the ``image`` key) and image layers."""
    shadow = two_floor_shadow()
    return {
        "blank": {
            "layers": [],
            "outputs": {"schema": 1, "scene_id": "blank", "site": SITE, "detections": []},
        },
        "house": {
            "layers": [([SITE], LAWN), ([FOOTPRINT], CONCRETE), ([DRIVEWAY], SOIL)],
            "outputs": {
                "schema": 1, "scene_id": "house", "site": SITE, "footprint": FOOTPRINT,
                "footprint_id": "house-1",
                "detections": [
                    {"stage": 5, "x_min": 20, "y_min": 32, "x_max": 36, "y_max": 48, "score": 0.92},
                    {"stage": 5, "x_min": 21, "y_min": 33, "x_max": 37, "y_max": 49, "score": 0.81},
                    {"stage": 0, "x_min": 40, "y_min": 14, "x_max": 50, "y_max": 22, "score": 0.2},
                ],
                "segmentation": {
                    "non_landscaped": [
                        {"polygons": [FOOTPRINT, DRIVEWAY]},
                        {"original": {"polygons": [FOOTPRINT, DRIVEWAY]},
                         "flipped": {"polygons": [FOOTPRINT, DRIVEWAY]}},
                    ],
                },
            },
        },
        "frame": {
            "layers": [([SITE], SOIL), ([FRAME_HALF], CONCRETE), ([shadow], SHADOW)],
            "outputs": {
                "schema": 1, "scene_id": "frame", "site": SITE, "footprint": FOOTPRINT,
                "footprint_id": "frame-1",
                "detections": [
                    {"stage": 2, "x_min": 14, "y_min": 14, "x_max": 50, "y_max": 30, "score": 0.35},
                ],
                "segmentation": {
                    "building_frame": [{"polygons": [FRAME_HALF]}],
                    "shadow": [{"polygons": [shadow]}],
                },
            },
        },
    }


SCENE_NAMES = ("blank", "house", "frame")


def fixture_scene(name: str) -> tuple:
    """``(RasterImage, SceneOutputs)`` for one of SCENE_NAMES."""
    from buildmon.sceneio import _fold

    spec = _scene_docs()[name]
    image = _image(spec["layers"])
    doc = spec["outputs"]
    seg = doc.get("segmentation", {})
    outputs = SceneOutputs(
        scene_id=doc["scene_id"],
        detections=[BBox.from_json(d) for d in doc["detections"]],
        site=doc.get("site"),
        footprint=doc.get("footprint"),
        footprint_id=doc.get("footprint_id", 0),
        **{k: [_fold(f, None, SIZE, SIZE) for f in seg[k]] if k in seg else None
           for k in ("building_frame", "non_landscaped", "shadow")},
    )
    return image, outputs


def ground_truth(name: str) -> SceneAnnotation:
    w = h = SIZE
    if name == "house":
        return SceneAnnotation(
            "house",
            boxes=[BBox(20, 32, 36, 48, 1.0, Stage.ROOF_COMPLETED_HOUSE)],
            masks=[rasterize_polygons([FOOTPRINT, DRIVEWAY], w, h, Stage.LANDSCAPING)],
            footprints=[FOOTPRINT],
        )
    if name == "frame":
        return SceneAnnotation(
            "frame",
            boxes=[BBox(14, 14, 50, 30, 1.0, Stage.FOUNDATION)],
            masks=[rasterize_polygons([FRAME_HALF], w, h, Stage.BUILDING_FRAME)],
            footprints=[FOOTPRINT],
        )
    return SceneAnnotation(name)


def pseudolabel_pool(n: int = 10, size: int = 32, seed: int = 0) -> list:
    """Scenes with one 10x10 frame each, so IoU moves in steps of 0.01."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        x, y = (int(v) for v in rng.integers(0, size - 10, size=2))
        rect = [[x, y], [x + 10, y], [x + 10, y + 10], [x, y + 10]]
        canvas = np.empty((4, size, size))
        canvas[:] = np.asarray(SOIL)[:, None, None]
        _paint(canvas, [rect], CONCRETE)
        image = RasterImage(canvas, CHANNELS, RESOLUTION, SUN)
        mask = rasterize_polygons([rect], size, size, Stage.BUILDING_FRAME)
        out.append((f"pl_{k:02d}", image, mask))
    return out


PSEUDO_SPLITS = {
    "labeled": ["pl_00", "pl_01", "pl_02", "pl_03"],
    "unlabeled": ["pl_04", "pl_05", "pl_06"],
    "holdout": ["pl_07", "pl_08", "pl_09"],
}
MOCK_SCRIPT = {"base_iou": 0.8, "gains": {"1": 0.01, "2": 0.01, "3": 0.01}}

PLATEAU_N = 25_000


def learning_curve_points(slope: float = 0.1, intercept: float = 0.2,
                          plateau_n=PLATEAU_N) -> list:
    ns = [500, 1000, 2000, 4000, 8000, 16000, 25000, 32000, 50000, 64000, 100000]
    cap = plateau_n or max(ns)
    return [(n, slope * math.log10(min(n, cap)) + intercept) for n in ns]


def write_fixture_set(directory) -> Path:
    """Write images, manifests, model outputs, predictions and configs."""
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "outputs").mkdir(exist_ok=True)
    records = []
    for name in SCENE_NAMES:
        image, _ = fixture_scene(name)
        save_image(root / "images" / f"{name}.png", image)
        records.append((root / "images" / f"{name}.png", ground_truth(name)))
        doc = copy.deepcopy(_scene_docs()[name]["outputs"])
        doc["image"] = f"../images/{name}.png"
        write_text_atomic(root / "outputs" / f"{name}.json", json.dumps(doc, indent=2) + "\n")
    save_dataset(root / "manifest.json", records)

    # predictions identical to the ground truth
    scenes = []
    for name in SCENE_NAMES:
        ann = ground_truth(name)
        scenes.append({
            "id": name,
            "detections": [b.to_json(with_score=True) for b in ann.boxes],
            "masks": [{"stage": int(m.stage), "png": f"masks/{name}_{k}.png"}
                      for k, m in enumerate(ann.masks)],
        })
    write_text_atomic(root / "predictions.json", json.dumps({"scenes": scenes}, indent=2) + "\n")

    pl_dir = root / "pseudolabel"
    (pl_dir / "images").mkdir(parents=True, exist_ok=True)
    pl_records = []
    for scene_id, image, mask in pseudolabel_pool():
        save_image(pl_dir / "images" / f"{scene_id}.png", image)
        pl_records.append((pl_dir / "images" / f"{scene_id}.png", SceneAnnotation(scene_id, masks=[mask])))
    save_dataset(pl_dir / "manifest.json", pl_records)
    write_text_atomic(pl_dir / "splits.json", json.dumps(PSEUDO_SPLITS, indent=2) + "\n")
    write_text_atomic(pl_dir / "mock_script.json", json.dumps(MOCK_SCRIPT, indent=2) + "\n")

    with open(root / "learning_curve.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_samples", "metric"])
        writer.writerows(learning_curve_points())

    config = {
        "nms": {"iou_threshold": 0.5, "mode": "hard", "sigma": 0.5, "score_floor": 0.001},
        "binarize_threshold": 0.5,
        "floor_height_m": FLOOR_HEIGHT,
        "stage_graph": {"parallel": [6]},
    }
    write_text_atomic(root / "config.json", json.dumps(config, indent=2) + "\n")
    return root


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: python -m buildmon.synthetic OUTDIR")
    print(write_fixture_set(sys.argv[1]))
