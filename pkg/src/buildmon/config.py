"""Pipeline configuration file (JSON, unknown keys rejected)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from buildmon import schemas
from buildmon.errors import BuildmonError, ConfigError
from buildmon.postprocess import NmsConfig
from buildmon.progress import AssessConfig, StageGraph


@dataclass(frozen=True)
class PseudoLabelConfig:
    max_rounds: int = 3
    confidence_threshold: float = 0.9
    min_confident_fraction: float = 0.5
    tolerance: float = 0.01
    regenerate: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    nms: NmsConfig = NmsConfig()
    binarize_threshold: float = 0.5
    graph: StageGraph = StageGraph()
    floor_height_m: float = 3.0
    tile_size: int = 256
    tile_overlap: int = 32
    target_resolution_m: Optional[float] = None
    match_iou_threshold: float = 0.5
    score_threshold: float = 0.5
    iou_mode: str = "per_image"
    plateau_epsilon: float = 0.005
    pseudolabel: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)

    @classmethod
    def from_json(cls, doc: dict, source: str = "") -> "PipelineConfig":
        try:
            schemas.validate(doc, "config", source)
        except BuildmonError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            tile = doc.get("tile", {})
            return cls(
                nms=NmsConfig(**doc.get("nms", {})),
                binarize_threshold=doc.get("binarize_threshold", 0.5),
                graph=StageGraph.from_json(doc.get("stage_graph", {})),
                floor_height_m=doc.get("floor_height_m", 3.0),
                tile_size=tile.get("size", 256),
                tile_overlap=tile.get("overlap", 32),
                target_resolution_m=doc.get("target_resolution_m"),
                match_iou_threshold=doc.get("match_iou_threshold", 0.5),
                score_threshold=doc.get("score_threshold", 0.5),
                iou_mode=doc.get("iou_mode", "per_image"),
                plateau_epsilon=doc.get("plateau_epsilon", 0.005),
                pseudolabel=PseudoLabelConfig(**doc.get("pseudolabel", {})),
            )
        except (BuildmonError, ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: {exc}" if source else str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_json(doc, str(path))

    def assess_config(self, require_height: bool = False) -> AssessConfig:
        return AssessConfig(self.nms, self.binarize_threshold, self.graph,
                            self.floor_height_m, require_height)
