"""Per-stage evaluation report in the row order of the stage taxonomy."""

from __future__ import annotations

import json

import numpy as np

from buildmon import schemas
from buildmon.annotations import LabelKind, Stage
from buildmon.metrics import (
    average_precision_from_flags,
    match_detections,
    mean_mask_iou,
    pixel_precision_recall,
    precision_recall,
)


def evaluate(predictions: dict, ground_truth, iou_thresh: float = 0.5,
             score_thresh: float = 0.5, iou_mode: str = "per_image") -> dict:
    """Compare ``{scene_id: ScenePrediction}`` against ``[(image, SceneAnnotation)]``.

    Box stages report precision/recall at ``score_thresh`` and all-point AP;
    segmentation stages report pixel precision/recall and mask IoU. Missing
    predictions for a scene count as empty.
    """
    rows = []
    for stage in Stage:
        if stage.label_kind is LabelKind.BBOX:
            scores, flags, n_gt = [], [], 0
            for image, ann in ground_truth:
                pred = predictions.get(ann.scene_id)
                dets = [d for d in (pred.detections if pred else []) if d.stage == stage]
                gts = ann.boxes_for(stage)
                flags.extend(match_detections(dets, gts, iou_thresh))
                scores.extend(d.score for d in dets)
                n_gt += len(gts)
            precision, recall = precision_recall(scores, flags, n_gt, score_thresh)
            rows.append({
                "stage": stage.key, "code": int(stage), "label_type": stage.label_kind.value,
                "precision": precision, "recall": recall,
                "ap": average_precision_from_flags(scores, flags, n_gt), "iou": None,
                "n_gt": n_gt, "n_pred": len(scores),
            })
        else:
            pairs = []
            n_gt = n_pred = 0
            for image, ann in ground_truth:
                shape = (image.height, image.width)
                gt = _union(ann.masks_for(stage), shape)
                pred = predictions.get(ann.scene_id)
                pm = [m for m in (pred.masks if pred else []) if m.stage == stage]
                pairs.append((_union(pm, shape), gt))
                n_gt += len(ann.masks_for(stage))
                n_pred += len(pm)
            precision, recall = pixel_precision_recall(pairs)
            rows.append({
                "stage": stage.key, "code": int(stage), "label_type": stage.label_kind.value,
                "precision": precision, "recall": recall, "ap": None,
                "iou": mean_mask_iou(pairs, iou_mode) if pairs else 1.0,
                "n_gt": n_gt, "n_pred": n_pred,
            })
    aps = [r["ap"] for r in rows if r["ap"] is not None]
    return {
        "schema": 1,
        "iou_threshold": iou_thresh,
        "score_threshold": score_thresh,
        "iou_mode": iou_mode,
        "stages": rows,
        "map": float(np.mean(aps)),
    }


def _union(masks, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        out |= m.as_bool()
    return out


def dumps(report: dict) -> str:
    schemas.validate(report, "evaluation")
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def format_table(report: dict) -> str:
    lines = [f"{'':>2} | {'Stage':<22} | {'Label type':<12} | {'Precision, %':>12} | "
             f"{'Recall, %':>9} | {'AP, %':>6} | {'IoU, %':>6}"]
    for r in report["stages"]:
        ap = "-" if r["ap"] is None else f"{100 * r['ap']:.1f}"
        iou = "-" if r["iou"] is None else f"{100 * r['iou']:.1f}"
        lines.append(f"{r['code']:>2} | {Stage(r['code']).title:<22} | {r['label_type']:<12} | "
                     f"{100 * r['precision']:>12.1f} | {100 * r['recall']:>9.1f} | {ap:>6} | {iou:>6}")
    lines.append(f"mAP (box stages): {100 * report['map']:.1f}%")
    return "\n".join(lines)
