"""
Evaluation and loss mathematics.

Mask IoU, the Lovász extension of the Jaccard loss (hinge and softmax forms),
detection matching, precision/recall, all-point average precision and the
log-linear learning-curve fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from buildmon.annotations import BBox
from buildmon.errors import InvalidArgumentError
from buildmon.postprocess import box_iou


@dataclass(frozen=True)
class PrCurvePoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class LearningCurvePoint:
    n_samples: int
    metric: float

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise InvalidArgumentError(f"n_samples must be a positive integer, got {self.n_samples}")
        if not 0.0 <= self.metric <= 1.0:
            raise InvalidArgumentError(f"metric must lie in [0, 1], got {self.metric}")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "metric", float(self.metric))


# --- masks ----------------------------------------------------------------------

def _as_bool(mask) -> np.ndarray:
    values = np.asarray(getattr(mask, "values", mask))
    return values >= 0.5 if values.dtype != bool else values


def mask_iou(pred, gt) -> float:
    """|pred & gt| / |pred | gt|; two empty masks score 1.0."""
    p, g = _as_bool(pred), _as_bool(gt)
    if p.shape != g.shape:
        raise InvalidArgumentError(f"mask shapes differ: {p.shape} vs {g.shape}")
    union = np.count_nonzero(p | g)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & g) / union


def mean_mask_iou(pairs: Iterable, mode: str = "per_image") -> float:
    """IoU over ``(pred, gt)`` pairs, averaged per image or pooled over pixels."""
    pairs = list(pairs)
    if not pairs:
        raise InvalidArgumentError("no mask pairs")
    if mode == "per_image":
        return float(np.mean([mask_iou(p, g) for p, g in pairs]))
    if mode == "pooled":
        inter = union = 0
        for p, g in pairs:
            p, g = _as_bool(p), _as_bool(g)
            if p.shape != g.shape:
                raise InvalidArgumentError(f"mask shapes differ: {p.shape} vs {g.shape}")
            inter += np.count_nonzero(p & g)
            union += np.count_nonzero(p | g)
        return 1.0 if union == 0 else inter / union
    raise InvalidArgumentError(f"unknown IoU mode {mode!r}")


def pixel_precision_recall(pairs: Iterable) -> tuple:
    """Pooled pixel precision and recall; 1.0 when the denominator is empty."""
    tp = fp = fn = 0
    for p, g in pairs:
        p, g = _as_bool(p), _as_bool(g)
        tp += np.count_nonzero(p & g)
        fp += np.count_nonzero(p & ~g)
        fn += np.count_nonzero(~p & g)
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return precision, recall


# --- Lovász ---------------------------------------------------------------------

def lovasz_grad(gt_sorted) -> np.ndarray:
    """Gradient of the Lovász extension of the Jaccard loss.

    ``gt_sorted`` is the binary ground truth permuted by descending error.
    """
    gt_sorted = np.asarray(gt_sorted, dtype=np.float64)
    positives = gt_sorted.sum()
    intersection = positives - np.cumsum(gt_sorted)
    union = positives + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_extension(errors, gt) -> float:
    """Lovász extension of the Jaccard loss at a non-negative error vector."""
    errors = np.asarray(errors, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if errors.shape != gt.shape:
        raise InvalidArgumentError("errors and ground truth differ in length")
    order = np.argsort(-errors, kind="stable")
    return float(np.dot(errors[order], lovasz_grad(gt[order])))


def lovasz_hinge_loss(scores, gt) -> tuple:
    """Binary Lovász hinge loss and its gradient with respect to ``scores``.

    Margins ``1 - sign * score`` are sorted descending (stable on ties), the
    positive part is weighted by :func:`lovasz_grad`. Returns ``(loss, grad)``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if scores.shape != gt.shape:
        raise InvalidArgumentError(f"length mismatch: {scores.size} scores, {gt.size} labels")
    if scores.size == 0:
        raise InvalidArgumentError("need at least one element")
    signs = 2.0 * gt - 1.0
    margins = 1.0 - signs * scores
    order = np.argsort(-margins, kind="stable")
    weights = lovasz_grad(gt[order])
    active = margins[order] > 0.0
    loss = float(np.dot(np.where(active, margins[order], 0.0), weights))
    grad = np.empty_like(scores)
    grad[order] = -signs[order] * weights * active
    return loss, grad


def lovasz_softmax_class(prob, gt) -> float:
    """Lovász-Softmax term of one class: Jaccard extension at ``|gt - prob|``."""
    prob = np.asarray(getattr(prob, "values", prob), dtype=np.float64)
    gt = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    if prob.shape != gt.shape:
        raise InvalidArgumentError(f"shape mismatch: {prob.shape} vs {gt.shape}")
    return lovasz_extension(np.abs(gt - prob), gt)


def lovasz_softmax_symmetric(prob, gt) -> float:
    """Foreground/background average of the Lovász-Softmax loss.

    ``prob`` is the foreground probability grid and ``gt`` a binary mask. At
    a hard prediction each class term equals that class's Jaccard loss.
    """
    prob = np.asarray(getattr(prob, "values", prob), dtype=np.float64)
    gt = np.asarray(getattr(gt, "values", gt), dtype=np.float64)
    return 0.5 * (lovasz_softmax_class(prob, gt) + lovasz_softmax_class(1.0 - prob, 1.0 - gt))


# --- detection ------------------------------------------------------------------

def _detection_order(dets: Sequence[BBox]) -> list:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].coords))


def match_detections(dets: Sequence[BBox], gts: Sequence[BBox], iou_thresh: float = 0.5) -> np.ndarray:
    """Greedy TP/FP flags for ``dets`` (aligned with the input order)."""
    flags = np.zeros(len(dets), dtype=bool)
    matched = [False] * len(gts)
    for i in _detection_order(dets):
        best, best_iou = -1, -1.0
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            iou = box_iou(dets[i], gt)
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_thresh:
            matched[best] = True
            flags[i] = True
    return flags


def precision_recall(scores, flags, n_gt: int, score_thresh: float = 0.5) -> tuple:
    """Precision and recall over detections scoring at least ``score_thresh``.

    Precision is 1.0 when nothing passes; recall is 1.0 when there is no ground truth.
    """
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    passed = scores >= score_thresh
    tp = int(np.count_nonzero(flags & passed))
    n_pass = int(np.count_nonzero(passed))
    precision = tp / n_pass if n_pass else 1.0
    recall = tp / n_gt if n_gt else 1.0
    return precision, recall


def pr_curve(scores, flags, n_gt: int) -> list:
    """One point per distinct score, thresholds descending (recall ascending)."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(flags, dtype=bool)
    if scores.size == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    s, f = scores[order], flags[order]
    tp = np.cumsum(f)
    count = np.arange(1, len(s) + 1)
    # last position of each run of tied scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    return [
        PrCurvePoint(float(s[k]), tp[k] / count[k], tp[k] / n_gt if n_gt else 1.0)
        for k in ends
    ]


def ap_from_curve(curve: Sequence[PrCurvePoint]) -> float:
    """All-point interpolated area under a recall-ascending PR curve."""
    if not curve:
        return 0.0
    recall = np.array([0.0] + [p.recall for p in curve])
    precision = np.array([p.precision for p in curve])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum(np.diff(recall) * envelope))


def average_precision_from_flags(scores, flags, n_gt: int) -> float:
    if n_gt == 0:
        return 1.0 if len(scores) == 0 else 0.0
    return ap_from_curve(pr_curve(scores, flags, n_gt))


def average_precision(dets: Sequence[BBox], gts: Sequence[BBox], iou_thresh: float = 0.5) -> float:
    """All-point AP for one class.

    With no ground truth, AP is 1.0 for an empty detection list and 0.0 otherwise.
    """
    flags = match_detections(dets, gts, iou_thresh)
    return average_precision_from_flags([d.score for d in dets], flags, len(gts))


def mean_average_precision(per_class: dict, iou_thresh: float = 0.5) -> float:
    """Mean of per-class AP over ``{stage: (dets, gts)}``."""
    if not per_class:
        raise InvalidArgumentError("no classes")
    return float(np.mean([average_precision(d, g, iou_thresh) for d, g in per_class.values()]))


# --- learning curve --------------------------------------------------------------

@dataclass(frozen=True)
class LearningCurveFit:
    slope: float
    intercept: float
    residual: float
    plateau_n: Optional[int]

    def predict(self, n) -> np.ndarray:
        return self.slope * np.log10(np.asarray(n, dtype=np.float64)) + self.intercept

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "residual": self.residual, "plateau_n": self.plateau_n}


def _loglinear_lstsq(n: np.ndarray, metric: np.ndarray) -> tuple:
    x = np.log10(n)
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, metric, rcond=None)
    return float(slope), float(intercept)


def fit_learning_curve(points: Sequence, epsilon: float = 0.005) -> LearningCurveFit:
    """Least-squares fit ``metric = slope * log10(n) + intercept``.

    ``plateau_n`` is the smallest sample count from which a log-linear fit of
    all remaining points (at least three) rises by no more than ``epsilon``
    up to the largest sample count, or None.
    """
    pts = sorted((p if isinstance(p, LearningCurvePoint) else LearningCurvePoint(*p) for p in points),
                 key=lambda p: p.n_samples)
    if len(pts) < 3:
        raise InvalidArgumentError(f"need at least 3 points, got {len(pts)}")
    n = np.array([p.n_samples for p in pts], dtype=np.float64)
    metric = np.array([p.metric for p in pts])
    if len(np.unique(n)) != len(n):
        raise InvalidArgumentError("n_samples values must be distinct")
    slope, intercept = _loglinear_lstsq(n, metric)
    fitted = slope * np.log10(n) + intercept
    residual = math.sqrt(float(np.mean((metric - fitted) ** 2)))
    plateau = None
    for k in range(len(pts) - 2):
        tail_slope, _ = _loglinear_lstsq(n[k:], metric[k:])
        rise = tail_slope * (math.log10(n[-1]) - math.log10(n[k]))
        if rise <= epsilon:
            plateau = int(n[k])
            break
    return LearningCurveFit(slope, intercept, residual, plateau)


def plot_data(points: Sequence) -> np.ndarray:
    """Two columns: log10(n_samples) and metric, sorted by sample count."""
    pts = sorted((p if isinstance(p, LearningCurvePoint) else LearningCurvePoint(*p) for p in points),
                 key=lambda p: p.n_samples)
    return np.array([[math.log10(p.n_samples), p.metric] for p in pts])
