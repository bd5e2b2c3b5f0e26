"""
Construction stage taxonomy, label primitives and the dataset manifest format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

from buildmon import schemas
from buildmon.errors import ParseError, ValidationError
from buildmon.raster import load_image, read_png, write_png, write_text_atomic


class LabelKind(str, Enum):
    BBOX = "Bbox"
    SEGMENTATION = "Segmentation"


class Stage(IntEnum):
    PREPARATORY_WORK = 0
    EXCAVATION = 1
    FOUNDATION = 2
    BASEMENT = 3
    BUILDING_FRAME = 4
    ROOF_COMPLETED_HOUSE = 5
    LANDSCAPING = 6

    @property
    def label_kind(self) -> LabelKind:
        return _LABEL_KINDS[self]

    @property
    def title(self) -> str:
        return _TITLES[self]

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "Stage":
        """Accept an integer code, a ``snake_case`` key or an enum member."""
        if isinstance(value, Stage):
            return value
        if isinstance(value, bool):
            raise ValueError(f"not a stage: {value!r}")
        if isinstance(value, int):
            return cls(value)
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                pass
        raise ValueError(f"not a stage: {value!r}")


_LABEL_KINDS = {
    Stage.PREPARATORY_WORK: LabelKind.BBOX,
    Stage.EXCAVATION: LabelKind.BBOX,
    Stage.FOUNDATION: LabelKind.BBOX,
    Stage.BASEMENT: LabelKind.BBOX,
    Stage.BUILDING_FRAME: LabelKind.SEGMENTATION,
    Stage.ROOF_COMPLETED_HOUSE: LabelKind.BBOX,
    Stage.LANDSCAPING: LabelKind.SEGMENTATION,
}

_TITLES = {
    Stage.PREPARATORY_WORK: "Preparatory work",
    Stage.EXCAVATION: "Excavation",
    Stage.FOUNDATION: "Foundation",
    Stage.BASEMENT: "Basement",
    Stage.BUILDING_FRAME: "Building frame",
    Stage.ROOF_COMPLETED_HOUSE: "Roof/Completed house",
    Stage.LANDSCAPING: "LandScaping",
}

BBOX_STAGES = tuple(s for s in Stage if s.label_kind is LabelKind.BBOX)
SEGMENTATION_STAGES = tuple(s for s in Stage if s.label_kind is LabelKind.SEGMENTATION)


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    score: float = 1.0
    stage: Stage = Stage.ROOF_COMPLETED_HOUSE

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max", "score"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"box {name} is not finite")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "stage", Stage.parse(self.stage))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"box score {self.score} outside [0, 1]")

    @property
    def coords(self) -> tuple:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def with_score(self, score: float) -> "BBox":
        return BBox(self.x_min, self.y_min, self.x_max, self.y_max, score, self.stage)

    def inside(self, width: float, height: float) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= width and self.y_max <= height

    def to_json(self, with_score: bool = False) -> dict:
        doc = {"stage": int(self.stage), "x_min": self.x_min, "y_min": self.y_min,
               "x_max": self.x_max, "y_max": self.y_max}
        if with_score:
            doc["score"] = self.score
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "BBox":
        return cls(doc["x_min"], doc["y_min"], doc["x_max"], doc["y_max"],
                   doc.get("score", 1.0), Stage.parse(doc["stage"]))


@dataclass(frozen=True, eq=False)
class MaskGrid:
    """Per-pixel probabilities (binary masks hold only 0 and 1)."""

    values: np.ndarray
    stage: Optional[Stage] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValidationError("mask must be a non-empty 2-D grid")
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise ValidationError("mask values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.stage is not None:
            object.__setattr__(self, "stage", Stage.parse(self.stage))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def as_bool(self) -> np.ndarray:
        return self.values >= 0.5

    def __eq__(self, other):
        if not isinstance(other, MaskGrid):
            return NotImplemented
        return self.stage == other.stage and np.array_equal(self.values, other.values)


# --- polygons ---------------------------------------------------------------

def _orientation(p, q, r):
    return np.sign((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                   - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))


def _on_segment(p, q, r):
    # r collinear with p-q: is it within the bounding box of p-q?
    return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


def _segments_intersect(a1, a2, b1, b2):
    o1 = _orientation(a1, a2, b1)
    o2 = _orientation(a1, a2, b2)
    o3 = _orientation(b1, b2, a1)
    o4 = _orientation(b1, b2, a2)
    hit = (o1 != o2) & (o3 != o4) & (o1 != 0) & (o2 != 0) & (o3 != 0) & (o4 != 0)
    hit |= (o1 == 0) & _on_segment(a1, a2, b1)
    hit |= (o2 == 0) & _on_segment(a1, a2, b2)
    hit |= (o3 == 0) & _on_segment(b1, b2, a1)
    hit |= (o4 == 0) & _on_segment(b1, b2, a2)
    return hit


def polygon_area(ring) -> float:
    ring = np.asarray(ring, dtype=np.float64)
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def as_polygon(points) -> np.ndarray:
    """Validate a ring and return it as an (n, 2) array without the closing vertex.

    Rings may be given open or explicitly closed; they must have at least three
    distinct vertices, non-zero area and no self-intersections.
    """
    try:
        ring = np.asarray(points, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"polygon is not a list of points: {exc}") from exc
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise ValidationError("polygon must be a list of [x, y] pairs")
    if not np.all(np.isfinite(ring)):
        raise ValidationError("polygon coordinates must be finite")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise ValidationError("polygon needs at least 3 distinct vertices")
    if np.any(np.all(ring == np.roll(ring, -1, axis=0), axis=1)):
        raise ValidationError("polygon has repeated consecutive vertices")
    n = len(ring)
    starts, ends = ring, np.roll(ring, -1, axis=0)
    i, j = np.triu_indices(n, k=1)
    adjacent = (j == i + 1) | ((i == 0) & (j == n - 1))
    bad = _segments_intersect(starts[i], ends[i], starts[j], ends[j]) & ~adjacent
    # adjacent edges may only share their common vertex
    ai, aj = i[adjacent], j[adjacent]
    first_is_i = aj == ai + 1
    shared = np.where(first_is_i[:, None], ends[ai], starts[ai])
    other_i = np.where(first_is_i[:, None], starts[ai], ends[ai])
    other_j = np.where(first_is_i[:, None], ends[aj], starts[aj])
    collinear = _orientation(other_i, shared, other_j) == 0
    backtrack = collinear & (np.einsum("ij,ij->i", other_i - shared, other_j - shared) > 0)
    if np.any(backtrack):
        raise ValidationError("polygon is self-intersecting (edges fold back)")
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValidationError(f"polygon is self-intersecting (edges {i[k]} and {j[k]})")
    if polygon_area(ring) == 0.0:
        raise ValidationError("polygon has zero area")
    return ring


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd crossing test, vectorized over query points."""
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    x1, y1 = ring[:, 0], ring[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for ax, ay, bx, by in zip(x1, y1, x2, y2):
        straddles = (ay > ys) != (by > ys)
        if not np.any(straddles):
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (ys - ay) * (bx - ax) / (by - ay)
        inside ^= straddles & (xs < x_cross)
    return inside


def rasterize_polygon(polygon, width: int, height: int, stage=None) -> MaskGrid:
    """Binary mask whose pixels are 1 iff the pixel centre lies inside the polygon."""
    ring = as_polygon(polygon)
    ys, xs = np.mgrid[0:height, 0:width] + 0.5
    inside = points_in_polygon(xs, ys, ring)
    return MaskGrid(inside.astype(np.float64), stage)


def rasterize_polygons(polygons, width: int, height: int, stage=None) -> MaskGrid:
    """Union of several polygon rasterizations."""
    out = np.zeros((height, width), dtype=bool)
    for poly in polygons:
        out |= rasterize_polygon(poly, width, height).as_bool()
    return MaskGrid(out.astype(np.float64), stage)


def polygon_inside(ring, width: float, height: float) -> bool:
    ring = np.asarray(ring, dtype=np.float64)
    return bool(np.all(ring[:, 0] >= 0) and np.all(ring[:, 0] <= width)
                and np.all(ring[:, 1] >= 0) and np.all(ring[:, 1] <= height))


# --- scene annotation ----------------------------------------------------------

@dataclass(eq=False)
class SceneAnnotation:
    scene_id: str
    boxes: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    footprints: list = field(default_factory=list)

    def __post_init__(self):
        self.footprints = [as_polygon(p) for p in self.footprints]
        for box in self.boxes:
            if box.score != 1.0:
                raise ValidationError(f"{self.scene_id}: ground-truth boxes carry score 1.0")

    def validate(self, width: int, height: int) -> None:
        for k, box in enumerate(self.boxes):
            if not box.inside(width, height):
                raise ValidationError(f"{self.scene_id}: box {k} {box.coords} outside {width}x{height} scene")
        for k, mask in enumerate(self.masks):
            if (mask.width, mask.height) != (width, height):
                raise ValidationError(
                    f"{self.scene_id}: mask {k} is {mask.width}x{mask.height}, scene is {width}x{height}")
        for k, ring in enumerate(self.footprints):
            if not polygon_inside(ring, width, height):
                raise ValidationError(f"{self.scene_id}: footprint {k} outside scene bounds")

    def masks_for(self, stage) -> list:
        stage = Stage.parse(stage)
        return [m for m in self.masks if m.stage == stage]

    def boxes_for(self, stage) -> list:
        stage = Stage.parse(stage)
        return [b for b in self.boxes if b.stage == stage]

    def __eq__(self, other):
        if not isinstance(other, SceneAnnotation):
            return NotImplemented
        return (self.scene_id == other.scene_id and self.boxes == other.boxes
                and self.masks == other.masks
                and len(self.footprints) == len(other.footprints)
                and all(np.array_equal(a, b) for a, b in zip(self.footprints, other.footprints)))


def _read_json(path, schema: str):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    try:
        schemas.validate(doc, schema, str(path))
    except ParseError:
        # name the first offending scene record when there is one
        scenes = doc.get("scenes") if isinstance(doc, dict) else None
        for k, scene in enumerate(scenes if isinstance(scenes, list) else []):
            try:
                schemas.validate({"scenes": [scene]}, schema)
            except ParseError as exc:
                sid = scene.get("id") if isinstance(scene, dict) else None
                raise ParseError(f"{path}: scenes[{k}] (id={sid!r}): {exc}") from exc
        raise
    return doc


def _load_mask(doc: dict, base: Path, width: int, height: int) -> MaskGrid:
    stage = Stage.parse(doc["stage"])
    if "png" in doc:
        planes = read_png(base / doc["png"])
        return MaskGrid(planes[0], stage)
    return rasterize_polygon(doc["polygon"], width, height, stage)


def load_dataset(manifest_path) -> list:
    """Load every scene of a manifest as ``(RasterImage, SceneAnnotation)`` pairs."""
    manifest_path = Path(manifest_path)
    doc = _read_json(manifest_path, "manifest")
    base = manifest_path.parent
    out = []
    seen = set()
    for k, scene in enumerate(doc["scenes"]):
        where = f"{manifest_path}: scenes[{k}] (id={scene['id']!r})"
        if scene["id"] in seen:
            raise ParseError(f"{where}: duplicate scene id")
        seen.add(scene["id"])
        image = load_image(base / scene["image"])
        ann_doc = scene.get("annotations", {})
        try:
            boxes = [BBox.from_json(b) for b in ann_doc.get("boxes", [])]
            masks = [_load_mask(m, base, image.width, image.height)
                     for m in ann_doc.get("masks", [])]
            ann = SceneAnnotation(scene["id"], boxes, masks, ann_doc.get("footprints", []))
            ann.validate(image.width, image.height)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        out.append((image, ann))
    return out


def save_dataset(manifest_path, records) -> None:
    """Write ``(image_path, SceneAnnotation)`` records as a manifest.

    Masks are written as 8-bit PNGs in a ``masks/`` directory beside the manifest.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    mask_dir = base / "masks"
    scenes = []
    for image_path, ann in records:
        masks = []
        for k, mask in enumerate(ann.masks):
            mask_dir.mkdir(parents=True, exist_ok=True)
            rel = Path("masks") / f"{ann.scene_id}_{k}.png"
            write_png(base / rel, mask.values)
            masks.append({"stage": int(mask.stage), "png": rel.as_posix()})
        image_path = Path(image_path)
        try:
            image_ref = image_path.relative_to(base).as_posix()
        except ValueError:
            image_ref = str(image_path)
        scenes.append({
            "id": ann.scene_id,
            "image": image_ref,
            "annotations": {
                "boxes": [b.to_json() for b in ann.boxes],
                "masks": masks,
                "footprints": [r.tolist() for r in ann.footprints],
            },
        })
    doc = {"scenes": scenes}
    schemas.validate(doc, "manifest")
    write_text_atomic(manifest_path, json.dumps(doc, indent=2) + "\n")


@dataclass(eq=False)
class ScenePrediction:
    scene_id: str
    detections: list = field(default_factory=list)
    masks: list = field(default_factory=list)


def load_predictions(path, sizes: Optional[dict] = None) -> dict:
    """Read a predictions file into ``{scene_id: ScenePrediction}``.

    ``sizes`` maps scene id to ``(width, height)`` and is needed to rasterize
    polygon masks.
    """
    path = Path(path)
    doc = _read_json(path, "predictions")
    out = {}
    for k, scene in enumerate(doc["scenes"]):
        where = f"{path}: scenes[{k}] (id={scene['id']!r})"
        try:
            dets = [BBox.from_json(d) for d in scene.get("detections", [])]
            masks = []
            for m in scene.get("masks", []):
                if "polygon" in m and (sizes is None or scene["id"] not in sizes):
                    raise ParseError(f"{where}: polygon mask needs the scene size")
                w, h = sizes[scene["id"]] if sizes and scene["id"] in sizes else (0, 0)
                masks.append(_load_mask(m, path.parent, w, h))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        out[scene["id"]] = ScenePrediction(scene["id"], dets, masks)
    return out


def save_detections(path, predictions) -> None:
    """Write ``ScenePrediction`` detections (boxes only) in the predictions format."""
    doc = {"scenes": [
        {"id": p.scene_id, "detections": [d.to_json(with_score=True) for d in p.detections]}
        for p in predictions
    ]}
    schemas.validate(doc, "predictions")
    write_text_atomic(path, json.dumps(doc, indent=2) + "\n")
