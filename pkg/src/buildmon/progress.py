"""
Stage-graph fusion of per-stage evidence into a site progress report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from buildmon import schemas
from buildmon.annotations import (
    BBox,
    LabelKind,
    MaskGrid,
    Stage,
    rasterize_polygon,
)
from buildmon.errors import BuildmonError, InvalidArgumentError, MissingMetadataError
from buildmon.height import HeightEstimate, estimate_height
from buildmon.postprocess import NmsConfig, binarize, ensemble_folds, merge_hflip_tta, suppress
from buildmon.raster import RasterImage, box_resample, degrade_resolution

SCHEMA_VERSION = 1
N_STAGES = len(Stage)

DEFAULT_EDGES = (
    (Stage.PREPARATORY_WORK, Stage.EXCAVATION),
    (Stage.EXCAVATION, Stage.FOUNDATION),
    (Stage.FOUNDATION, Stage.BASEMENT),
    (Stage.BASEMENT, Stage.BUILDING_FRAME),
    (Stage.BUILDING_FRAME, Stage.ROOF_COMPLETED_HOUSE),
    (Stage.BUILDING_FRAME, Stage.LANDSCAPING),
)


def _per_stage(values, name: str) -> tuple:
    if isinstance(values, Mapping):
        out = [None] * N_STAGES
        for key, v in values.items():
            out[Stage.parse(int(key) if isinstance(key, str) and key.isdigit() else key)] = float(v)
        if any(v is None for v in out):
            missing = [Stage(i).key for i, v in enumerate(out) if v is None]
            raise InvalidArgumentError(f"{name}: missing stages {missing}")
        return tuple(out)
    values = tuple(float(v) for v in values)
    if len(values) != N_STAGES:
        raise InvalidArgumentError(f"{name}: need {N_STAGES} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class StageGraph:
    """Prerequisite DAG over the construction stages.

    ``parallel`` stages run alongside the main sequence: they never become the
    resolved stage and contribute their own fraction once their prerequisites
    are complete.
    """

    edges: frozenset = frozenset(DEFAULT_EDGES)
    thresholds: tuple = (0.5,) * N_STAGES
    weights: tuple = (1.0 / N_STAGES,) * N_STAGES
    parallel: frozenset = frozenset({Stage.LANDSCAPING})

    def __post_init__(self):
        edges = frozenset((Stage.parse(a), Stage.parse(b)) for a, b in self.edges)
        if any(a == b for a, b in edges):
            raise InvalidArgumentError("stage graph has a self-loop")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "parallel", frozenset(Stage.parse(s) for s in self.parallel))
        thresholds = _per_stage(self.thresholds, "thresholds")
        weights = _per_stage(self.weights, "weights")
        if any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise InvalidArgumentError("thresholds must lie in [0, 1]")
        if any(w < 0.0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"weights must be non-negative and sum to 1, got {sum(weights)}")
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "weights", weights)
        ancestors = {s: set() for s in Stage}
        for s in self._topological_order():
            for a, b in edges:
                if b == s:
                    ancestors[s] |= ancestors[a] | {a}
        object.__setattr__(self, "_ancestors", {s: frozenset(v) for s, v in ancestors.items()})
        for s in Stage:
            if s not in self.parallel and ancestors[s] & self.parallel:
                raise InvalidArgumentError(f"parallel stages cannot be prerequisites of {s.key}")

    def _topological_order(self) -> list:
        indegree = {s: 0 for s in Stage}
        for _, b in self.edges:
            indegree[b] += 1
        ready = sorted(s for s, d in indegree.items() if d == 0)
        order = []
        while ready:
            s = ready.pop(0)
            order.append(s)
            for a, b in sorted(self.edges):
                if a == s:
                    indegree[b] -= 1
                    if indegree[b] == 0:
                        ready.append(b)
                        ready.sort()
        if len(order) != N_STAGES:
            raise InvalidArgumentError("stage graph has a cycle")
        return order

    def ancestors(self, stage) -> frozenset:
        return self._ancestors[Stage.parse(stage)]

    def descendants(self, stage) -> frozenset:
        stage = Stage.parse(stage)
        return frozenset(s for s in Stage if stage in self._ancestors[s])

    def to_json(self) -> dict:
        return {
            "edges": sorted([int(a), int(b)] for a, b in self.edges),
            "thresholds": {s.key: self.thresholds[s] for s in Stage},
            "weights": {s.key: self.weights[s] for s in Stage},
            "parallel": sorted(int(s) for s in self.parallel),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "StageGraph":
        default = cls()
        return cls(
            edges=frozenset(tuple(e) for e in doc.get("edges", default.edges)),
            thresholds=doc.get("thresholds", default.thresholds),
            weights=doc.get("weights", default.weights),
            parallel=frozenset(doc.get("parallel", default.parallel)),
        )


@dataclass(frozen=True)
class StageEvidence:
    scores: tuple = (0.0,) * N_STAGES

    def __post_init__(self):
        scores = _per_stage(self.scores, "evidence")
        if any(not 0.0 <= v <= 1.0 for v in scores):
            raise InvalidArgumentError("evidence scores must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)

    def __getitem__(self, stage) -> float:
        return self.scores[Stage.parse(stage)]

    def to_json(self) -> dict:
        return {s.key: self.scores[s] for s in Stage}


# --- operations --------------------------------------------------------------------

def _site_mask(site, shape) -> np.ndarray:
    height, width = shape
    if site is None:
        return np.ones(shape, dtype=bool)
    mask = rasterize_polygon(site, width, height).as_bool()
    if not mask.any():
        raise InvalidArgumentError("site polygon covers no pixels")
    return mask


def _bool(mask) -> np.ndarray:
    values = np.asarray(getattr(mask, "values", mask))
    return values if values.dtype == bool else values >= 0.5


def coverage_fraction(mask, site=None) -> float:
    """Share of site pixels covered by ``mask``."""
    m = _bool(mask)
    inside = _site_mask(site, m.shape)
    return float(min(1.0, np.count_nonzero(m & inside) / np.count_nonzero(inside)))


def landscaping_progress(non_landscaped, site=None) -> float:
    """Landscaped share of the site, from a mask of the *non*-landscaped area."""
    return 1.0 - coverage_fraction(non_landscaped, site)


def stage_evidence(detections=None, masks: Optional[Mapping] = None, site=None,
                   heights=None) -> StageEvidence:
    """Per-stage evidence from NMS-filtered detections and binary masks.

    ``masks`` maps BUILDING_FRAME to the frame mask and LANDSCAPING to the
    non-landscaped mask. ``heights`` is accepted for interface symmetry and
    does not change the evidence.
    """
    scores = [0.0] * N_STAGES
    if isinstance(detections, Mapping):
        detections = [b for boxes in detections.values() for b in boxes]
    for box in detections or ():
        if box.stage.label_kind is LabelKind.BBOX:
            scores[box.stage] = max(scores[box.stage], box.score)
    masks = {Stage.parse(k): v for k, v in (masks or {}).items()}
    if masks.get(Stage.BUILDING_FRAME) is not None:
        scores[Stage.BUILDING_FRAME] = coverage_fraction(masks[Stage.BUILDING_FRAME], site)
    if masks.get(Stage.LANDSCAPING) is not None:
        scores[Stage.LANDSCAPING] = landscaping_progress(masks[Stage.LANDSCAPING], site)
    return StageEvidence(tuple(scores))


def _met(evidence: StageEvidence, graph: StageGraph) -> dict:
    return {s: evidence[s] >= graph.thresholds[s] for s in Stage}


def satisfied_stages(evidence: StageEvidence, graph: StageGraph) -> frozenset:
    """Stages meeting their threshold, plus every ancestor of such a stage."""
    met = _met(evidence, graph)
    out = set()
    for s in Stage:
        if met[s]:
            out |= {s} | graph.ancestors(s)
    return frozenset(out)


def resolve_stage(evidence: StageEvidence, graph: StageGraph = StageGraph()) -> tuple:
    """Current stage and how far into it the site is.

    Returns ``(stage, intra_fraction)``. The fraction is the stage's own
    evidence for segmentation stages and 1.0 otherwise; a stage implied by a
    later stage counts as complete.
    """
    met = _met(evidence, graph)
    satisfied = satisfied_stages(evidence, graph)
    candidates = [s for s in satisfied if s not in graph.parallel]
    if not candidates:
        return Stage.PREPARATORY_WORK, 0.0
    stage = max(candidates)
    implied = any(met[d] for d in graph.descendants(stage))
    if implied or stage.label_kind is LabelKind.BBOX:
        return stage, 1.0
    return stage, evidence[stage]


def total_progress(resolved, intra_fraction: float, graph: StageGraph = StageGraph(),
                   parallel_fractions: Optional[Mapping] = None) -> float:
    """Completed share of the weighted stage graph, in percent."""
    resolved = Stage.parse(resolved)
    if not 0.0 <= intra_fraction <= 1.0:
        raise InvalidArgumentError("intra_fraction must lie in [0, 1]")
    done = set(graph.ancestors(resolved))
    terms = [graph.weights[s] for s in done] + [graph.weights[resolved] * intra_fraction]
    if intra_fraction >= 1.0:
        done.add(resolved)
    for stage, fraction in (parallel_fractions or {}).items():
        stage = Stage.parse(stage)
        if stage in graph.parallel and graph.ancestors(stage) <= done:
            terms.append(graph.weights[stage] * min(1.0, max(0.0, float(fraction))))
    return float(100.0 * min(1.0, max(0.0, math.fsum(terms))))


def progress_from_evidence(evidence: StageEvidence, graph: StageGraph = StageGraph()) -> float:
    stage, intra = resolve_stage(evidence, graph)
    return total_progress(stage, intra, graph, {s: evidence[s] for s in graph.parallel})


# --- site report ---------------------------------------------------------------------

@dataclass(frozen=True)
class SiteReport:
    scene_id: str
    stage: Stage
    evidence: StageEvidence
    intra_fraction: float
    total_progress: float
    height: Optional[HeightEstimate] = None
    landscaping_fraction: Optional[float] = None
    footprint_id: object = 0

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "scene_id": self.scene_id,
            "stage": self.stage.key,
            "stage_code": int(self.stage),
            "evidence": self.evidence.to_json(),
            "intra_fraction": self.intra_fraction,
            "landscaping_fraction": self.landscaping_fraction,
            "height": self.height.to_json(self.footprint_id) if self.height else None,
            "total_progress": self.total_progress,
        }

    def dumps(self) -> str:
        doc = self.to_json()
        schemas.validate(doc, "site_report")
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, doc: dict) -> "SiteReport":
        schemas.validate(doc, "site_report")
        height = doc.get("height")
        return cls(
            scene_id=doc["scene_id"],
            stage=Stage(doc["stage_code"]),
            evidence=StageEvidence(doc["evidence"]),
            intra_fraction=doc["intra_fraction"],
            total_progress=doc["total_progress"],
            height=HeightEstimate.from_json(height) if height else None,
            landscaping_fraction=doc.get("landscaping_fraction"),
            footprint_id=height["footprint_id"] if height else 0,
        )


@dataclass
class SceneOutputs:
    """Raw model outputs for one scene.

    Each segmentation entry is a list of per-fold predictions; a fold is a grid
    or an ``(original, flipped_back)`` pair to be merged as flip TTA.
    """

    scene_id: str
    detections: list = field(default_factory=list)
    building_frame: Optional[Sequence] = None
    non_landscaped: Optional[Sequence] = None
    shadow: Optional[Sequence] = None
    site: Optional[object] = None
    footprint: Optional[object] = None
    footprint_id: object = 0


@dataclass(frozen=True)
class AssessConfig:
    nms: NmsConfig = NmsConfig()
    binarize_threshold: float = 0.5
    graph: StageGraph = StageGraph()
    floor_height_m: float = 3.0
    require_height: bool = False


def fuse_segmentation(folds: Sequence, threshold: float = 0.5) -> MaskGrid:
    """Merge flip-TTA pairs, average the folds and binarize."""
    grids = [merge_hflip_tta(*f) if isinstance(f, tuple) else f for f in folds]
    return binarize(ensemble_folds(grids), threshold)


def assess_scene(image: RasterImage, outputs: SceneOutputs,
                 config: AssessConfig = AssessConfig()) -> SiteReport:
    try:
        return _assess(image, outputs, config)
    except BuildmonError as exc:
        raise type(exc)(f"scene {outputs.scene_id!r}: {exc}") from exc


def _assess(image, outputs, config):
    dets = suppress(outputs.detections, config.nms)
    masks = {}
    if outputs.building_frame:
        masks[Stage.BUILDING_FRAME] = fuse_segmentation(outputs.building_frame, config.binarize_threshold)
    if outputs.non_landscaped:
        masks[Stage.LANDSCAPING] = fuse_segmentation(outputs.non_landscaped, config.binarize_threshold)
    for m in masks.values():
        if (m.height, m.width) != (image.height, image.width):
            raise InvalidArgumentError(
                f"mask is {m.width}x{m.height}, image is {image.width}x{image.height}")
    evidence = stage_evidence(dets, masks, outputs.site)
    stage, intra = resolve_stage(evidence, config.graph)

    height = None
    if config.require_height and image.sun is None:
        raise MissingMetadataError("height requested but the image has no sun metadata")
    if outputs.shadow and outputs.footprint is not None and image.sun is not None:
        shadow = fuse_segmentation(outputs.shadow, config.binarize_threshold)
        height = estimate_height(shadow, outputs.footprint, image.sun, image.resolution,
                                 config.floor_height_m)
    elif config.require_height:
        raise MissingMetadataError("height requested but no shadow mask or footprint was given")

    landscaping = evidence[Stage.LANDSCAPING] if Stage.LANDSCAPING in masks else None
    parallel = {s: evidence[s] for s in config.graph.parallel}
    progress = total_progress(stage, intra, config.graph, parallel)
    # the footprint id is only reported alongside a height estimate
    return SiteReport(outputs.scene_id, stage, evidence, intra, progress, height,
                      landscaping, outputs.footprint_id if height else 0)


def degrade_scene(image: RasterImage, outputs: SceneOutputs, target_resolution: float) -> tuple:
    """Resample an image and its model outputs to a coarser ground resolution."""
    coarse = degrade_resolution(image, target_resolution)
    sx, sy = coarse.width / image.width, coarse.height / image.height

    def grid(g):
        return box_resample(g, coarse.height, coarse.width)

    def folds(entries):
        if not entries:
            return entries
        return [tuple(grid(g) for g in f) if isinstance(f, tuple) else grid(f) for f in entries]

    def ring(points):
        if points is None:
            return None
        return (np.asarray(points, dtype=np.float64) * [sx, sy]).tolist()

    boxes = [BBox(b.x_min * sx, b.y_min * sy, b.x_max * sx, b.y_max * sy, b.score, b.stage)
             for b in outputs.detections]
    scaled = SceneOutputs(outputs.scene_id, boxes, folds(outputs.building_frame),
                          folds(outputs.non_landscaped), folds(outputs.shadow),
                          ring(outputs.site), ring(outputs.footprint), outputs.footprint_id)
    return coarse, scaled
