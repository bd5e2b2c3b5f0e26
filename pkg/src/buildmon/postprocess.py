"""
Post-processing of raw model outputs: NMS, Soft-NMS, flip TTA, fold ensembling
and binarization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from buildmon.annotations import BBox, MaskGrid
from buildmon.errors import InvalidArgumentError


class NmsMode(str, Enum):
    HARD = "hard"
    SOFT_GAUSSIAN = "soft_gaussian"
    SOFT_LINEAR = "soft_linear"


@dataclass(frozen=True)
class NmsConfig:
    iou_threshold: float = 0.5
    mode: NmsMode = NmsMode.HARD
    sigma: float = 0.5
    score_floor: float = 0.001

    def __post_init__(self):
        object.__setattr__(self, "mode", NmsMode(self.mode))
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise InvalidArgumentError("iou_threshold must lie in [0, 1]")
        if not self.sigma > 0.0:
            raise InvalidArgumentError("sigma must be positive")
        if not 0.0 <= self.score_floor <= 1.0:
            raise InvalidArgumentError("score_floor must lie in [0, 1]")


def box_iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def _rank_key(box: BBox):
    # score descending, ties by smaller coordinates first
    return (-box.score, box.coords)


def nms(boxes: Sequence[BBox], config: NmsConfig = NmsConfig()) -> list:
    """Greedy non-maximum suppression for boxes of one class.

    Survivors keep their scores and come back sorted by score, descending.
    """
    remaining = sorted(boxes, key=_rank_key)
    keep = []
    while remaining:
        best = remaining.pop(0)
        keep.append(best)
        remaining = [b for b in remaining if box_iou(best, b) <= config.iou_threshold]
    return keep


def soft_nms(boxes: Sequence[BBox], config: NmsConfig = NmsConfig(mode=NmsMode.SOFT_GAUSSIAN)) -> list:
    """Soft-NMS: decay the scores of overlapping boxes instead of removing them.

    Gaussian mode multiplies by ``exp(-iou**2 / sigma)``; linear mode by
    ``1 - iou`` when ``iou > iou_threshold``. Boxes decayed below
    ``score_floor`` are dropped. ``HARD`` mode falls back to :func:`nms`.
    """
    if config.mode is NmsMode.HARD:
        return nms(boxes, config)
    pending = list(boxes)
    scores = [b.score for b in pending]
    out = []
    while pending:
        k = min(range(len(pending)), key=lambda i: (-scores[i], pending[i].coords))
        best = pending.pop(k)
        best_score = scores.pop(k)
        out.append(best if best_score == best.score else best.with_score(best_score))
        kept_boxes, kept_scores = [], []
        for box, score in zip(pending, scores):
            iou = box_iou(best, box)
            if config.mode is NmsMode.SOFT_GAUSSIAN:
                score *= math.exp(-(iou * iou) / config.sigma)
            elif iou > config.iou_threshold:
                score *= 1.0 - iou
            if score >= config.score_floor:
                kept_boxes.append(box)
                kept_scores.append(score)
        pending, scores = kept_boxes, kept_scores
    return sorted(out, key=_rank_key)


def suppress(boxes: Sequence[BBox], config: NmsConfig = NmsConfig()) -> list:
    """Run NMS or Soft-NMS (per ``config.mode``) separately for each stage."""
    by_stage = {}
    for box in boxes:
        by_stage.setdefault(box.stage, []).append(box)
    out = []
    for stage in sorted(by_stage):
        out.extend(soft_nms(by_stage[stage], config))
    return out


def filter_scores(boxes: Sequence[BBox], min_score: float) -> list:
    return [b for b in boxes if b.score >= min_score]


def _same_shape(grids) -> list:
    arrays = [np.asarray(getattr(g, "values", g), dtype=np.float64) for g in grids]
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise InvalidArgumentError(f"grid shapes differ: {shape} vs {a.shape}")
    return arrays


def merge_hflip_tta(p_orig, p_from_flipped) -> np.ndarray:
    """Average a prediction with the un-mirrored prediction of the mirrored input."""
    a, b = _same_shape([p_orig, p_from_flipped])
    return (a + b) / 2.0


def ensemble_folds(grids: Sequence) -> np.ndarray:
    if len(grids) == 0:
        raise InvalidArgumentError("need at least one fold prediction")
    return np.mean(np.stack(_same_shape(grids)), axis=0)


def binarize(grid, threshold: float = 0.5, stage=None) -> MaskGrid:
    values = np.asarray(getattr(grid, "values", grid), dtype=np.float64)
    if stage is None:
        stage = getattr(grid, "stage", None)
    return MaskGrid((values >= threshold).astype(np.float64), stage)


def predict_hflip(predict: Callable, image: np.ndarray) -> np.ndarray:
    """Flip TTA around ``predict(array) -> grid``; ``image`` is channel-first."""
    p_orig = predict(image)
    p_flip = predict(image[..., ::-1])
    return merge_hflip_tta(p_orig, np.asarray(p_flip)[..., ::-1])


def predict_ensemble(fold_predictors: Sequence[Callable], image: np.ndarray,
                     tta: bool = True) -> np.ndarray:
    """Average flip-TTA predictions from every fold model."""
    if tta:
        return ensemble_folds([predict_hflip(f, image) for f in fold_predictors])
    return ensemble_folds([f(image) for f in fold_predictors])
