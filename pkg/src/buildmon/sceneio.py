"""Reader/writer for per-scene model-output files consumed by ``buildmon assess``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from buildmon import schemas
from buildmon.annotations import BBox, rasterize_polygons
from buildmon.errors import ParseError, ValidationError
from buildmon.progress import SceneOutputs
from buildmon.raster import read_png, write_text_atomic

SEGMENTATION_KEYS = ("building_frame", "non_landscaped", "shadow")


def _source(doc: dict, base: Path, width: int, height: int) -> np.ndarray:
    if "png" in doc:
        grid = read_png(base / doc["png"])[0]
    elif "polygons" in doc:
        grid = rasterize_polygons(doc["polygons"], width, height).values
    else:
        grid = np.full((height, width), float(doc["fill"]))
    if grid.shape != (height, width):
        raise ValidationError(f"grid is {grid.shape[1]}x{grid.shape[0]}, image is {width}x{height}")
    return grid


def _fold(doc: dict, base, width, height):
    if "original" in doc:
        return (_source(doc["original"], base, width, height),
                _source(doc["flipped"], base, width, height))
    return _source(doc, base, width, height)


def load_scene_outputs(path, width: int, height: int) -> SceneOutputs:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    schemas.validate(doc, "scene_outputs", str(path))
    base = path.parent
    try:
        seg = doc.get("segmentation", {})
        return SceneOutputs(
            scene_id=doc["scene_id"],
            detections=[BBox.from_json(d) for d in doc.get("detections", [])],
            site=doc.get("site"),
            footprint=doc.get("footprint"),
            footprint_id=doc.get("footprint_id", 0),
            **{k: [_fold(f, base, width, height) for f in seg[k]] if seg.get(k) else None
               for k in SEGMENTATION_KEYS},
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def image_path_of(path) -> Path:
    """Image referenced by a scene-outputs file, resolved against its directory."""
    path = Path(path)
    doc = json.loads(path.read_text())
    schemas.validate(doc, "scene_outputs", str(path))
    return path.parent / doc["image"]


def dump_scene_outputs(path, doc: dict) -> None:
    schemas.validate(doc, "scene_outputs", str(path))
    write_text_atomic(path, json.dumps(doc, indent=2) + "\n")
