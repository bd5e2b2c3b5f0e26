"""
Command-line entry point.

Exit codes: 0 success, 1 input error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from buildmon import evaluation, schemas
from buildmon.annotations import LabelKind, Stage, load_dataset, load_predictions
from buildmon.config import PipelineConfig
from buildmon.errors import BuildmonError, ConfigError, ParseError
from buildmon.metrics import LearningCurvePoint, fit_learning_curve, plot_data
from buildmon.progress import assess_scene, degrade_scene, fuse_segmentation
from buildmon.pseudolabel import Scene, ScriptedModel, run_pseudo_labeling
from buildmon.postprocess import suppress
from buildmon.raster import load_image, write_text_atomic
from buildmon.sceneio import image_path_of, load_scene_outputs

log = logging.getLogger("buildmon")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2


class InputError(BuildmonError):
    pass


def _emit(text: str, out) -> None:
    if out:
        write_text_atomic(out, text)
    else:
        sys.stdout.write(text)


def _load_config(path) -> PipelineConfig:
    return PipelineConfig.load(path) if path else PipelineConfig()


# --- validate --------------------------------------------------------------------

def dataset_summary(dataset) -> dict:
    rows = []
    for stage in Stage:
        labels = images = 0
        for _, ann in dataset:
            n = len(ann.boxes_for(stage)) if stage.label_kind is LabelKind.BBOX else len(ann.masks_for(stage))
            labels += n
            images += n > 0
        rows.append({"code": int(stage), "stage": stage.key, "label_type": stage.label_kind.value,
                     "total_labels": labels, "total_images": images})
    return {"schema": 1, "n_scenes": len(dataset), "stages": rows}


def format_summary(summary: dict) -> str:
    lines = [f"{'':>2} | {'Stage':<22} | {'Label type':<12} | {'Total labels':>12} | {'Total Images':>12}"]
    for r in summary["stages"]:
        lines.append(f"{r['code']:>2} | {Stage(r['code']).title:<22} | {r['label_type']:<12} | "
                     f"{r['total_labels']:>12} | {r['total_images']:>12}")
    lines.append(f"{summary['n_scenes']} scenes")
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    dataset = load_dataset(args.manifest)
    summary = dataset_summary(dataset)
    if (args.format or "text") == "json":
        schemas.validate(summary, "dataset_summary")
        _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.out)
    else:
        _emit(format_summary(summary), args.out)
    return EXIT_OK


# --- assess ------------------------------------------------------------------------

def cmd_assess(args) -> int:
    config = _load_config(args.config)
    image_path = Path(args.image) if args.image else image_path_of(args.outputs)
    image = load_image(image_path)
    outputs = load_scene_outputs(args.outputs, image.width, image.height)
    if args.height and image.sun is None:
        raise InputError(f"--height requested but {image_path} has no sun metadata")
    target = args.target_resolution or config.target_resolution_m
    if target:
        image, outputs = degrade_scene(image, outputs, target)
    report = assess_scene(image, outputs, config.assess_config(require_height=args.height))
    if args.overlay:
        from buildmon.overlay import save_overlay

        dets = suppress(outputs.detections, config.nms)
        masks = {}
        if outputs.building_frame:
            masks[Stage.BUILDING_FRAME] = fuse_segmentation(outputs.building_frame, config.binarize_threshold)
        if outputs.non_landscaped:
            masks[Stage.LANDSCAPING] = fuse_segmentation(outputs.non_landscaped, config.binarize_threshold)
        if outputs.shadow:
            masks["shadow"] = fuse_segmentation(outputs.shadow, config.binarize_threshold)
        polygons = [p for p in (outputs.site, outputs.footprint) if p is not None]
        caption = f"{report.stage.title}  {report.total_progress:.1f}%"
        save_overlay(args.overlay, image, dets, masks, polygons, caption=caption)
    _emit(report.dumps(), args.out)
    return EXIT_OK


# --- evaluate ------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    config = _load_config(args.config)
    truth = load_dataset(args.ground_truth)
    sizes = {ann.scene_id: (img.width, img.height) for img, ann in truth}
    preds = load_predictions(args.predictions, sizes)
    unknown = sorted(set(preds) - set(sizes))
    if unknown:
        raise InputError(f"predictions for scenes not in the ground truth: {unknown}")
    report = evaluation.evaluate(preds, truth, config.match_iou_threshold,
                                 config.score_threshold, config.iou_mode)
    text = evaluation.dumps(report)
    if args.format == "text":
        text = evaluation.format_table(report) + "\n"
    _emit(text, args.out)
    return EXIT_OK


# --- learning curve ----------------------------------------------------------------

def read_points(path) -> list:
    points = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"n_samples", "metric"} <= set(reader.fieldnames):
            raise ParseError(f"{path}: need columns n_samples,metric")
        for line, row in enumerate(reader, start=2):
            try:
                points.append(LearningCurvePoint(int(row["n_samples"]), float(row["metric"])))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{line}: {exc}") from exc
    return points


def cmd_learning_curve(args) -> int:
    config = _load_config(args.config)
    points = read_points(args.points)
    epsilon = args.epsilon if args.epsilon is not None else config.plateau_epsilon
    fit = fit_learning_curve(points, epsilon)
    plot_path = Path(args.plot_data) if args.plot_data else Path(args.points).with_suffix(".plot.tsv")
    rows = "".join(f"{float(x)!r}\t{float(y)!r}\n" for x, y in plot_data(points))
    write_text_atomic(plot_path, "log10_n\tmetric\n" + rows)
    doc = {"schema": 1, **fit.to_json(), "n_points": len(points), "plot_data": str(plot_path)}
    schemas.validate(doc, "learning_curve")
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


# --- pseudo-labeling ------------------------------------------------------------------

def cmd_pseudolabel(args) -> int:
    config = _load_config(args.config)
    stage = Stage.parse(args.stage)
    splits = json.loads(Path(args.splits).read_text())
    schemas.validate(splits, "splits", args.splits)
    script = json.loads(Path(args.script).read_text())
    schemas.validate(script, "mock_script", args.script)
    scenes = {}
    for image, ann in load_dataset(args.manifest):
        mask = np.zeros((image.height, image.width))
        for m in ann.masks_for(stage):
            mask = np.maximum(mask, m.as_bool())
        scenes[ann.scene_id] = Scene(ann.scene_id, image, mask)
    missing = sorted({i for ids in splits.values() for i in ids} - set(scenes))
    if missing:
        raise InputError(f"split scene ids not in the manifest: {missing}")

    def pick(name, with_mask=True):
        return [scenes[i] if with_mask else Scene(i, scenes[i].image) for i in splits[name]]

    labeled, unlabeled, holdout = pick("labeled"), pick("unlabeled", False), pick("holdout")
    truth = {s.scene_id: s.mask for s in holdout}
    model = ScriptedModel(script, truth, seed=args.seed)
    pl = config.pseudolabel
    history = run_pseudo_labeling(model, labeled, unlabeled, holdout, pl.max_rounds,
                                  pl.confidence_threshold, pl.min_confident_fraction,
                                  pl.tolerance, pl.regenerate)
    for r in history.rounds:
        print(f"round {r.round}: holdout IoU {r.holdout_iou:.4f}, pseudo-labeled {r.n_pseudo}",
              file=sys.stderr)
    for w in history.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(history.dumps(), args.out)
    return EXIT_OK


# --- wiring ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=0, help="seed for any randomized step")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--format", choices=("json", "text"),
                        help="output format (validate defaults to text, the rest to json)")

    parser = argparse.ArgumentParser(prog="buildmon", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a dataset manifest and count labels")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("assess", parents=[common], help="site report from one scene's model outputs")
    p.add_argument("outputs", help="scene outputs JSON")
    p.add_argument("--image", help="override the image referenced by the outputs file")
    p.add_argument("--overlay", help="also write an overlay PNG")
    p.add_argument("--height", action="store_true", help="require a height estimate")
    p.add_argument("--target-resolution", type=float, metavar="M",
                   help="degrade imagery and outputs to M metres per pixel first")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("evaluate", parents=[common], help="per-stage precision/recall/AP/IoU")
    p.add_argument("predictions")
    p.add_argument("ground_truth", help="ground-truth manifest")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("learning-curve", parents=[common], help="fit metric = a*log10(n) + b")
    p.add_argument("points", help="CSV with n_samples,metric columns")
    p.add_argument("--plot-data", help="two-column plot file (default: <points>.plot.tsv)")
    p.add_argument("--epsilon", type=float, help="plateau tolerance")
    p.set_defaults(func=cmd_learning_curve)

    p = sub.add_parser("pseudolabel", parents=[common], help="simulate the pseudo-labeling loop")
    p.add_argument("manifest")
    p.add_argument("--splits", required=True, help="JSON with labeled/unlabeled/holdout scene ids")
    p.add_argument("--script", required=True, help="mock model script JSON")
    p.add_argument("--stage", default="building_frame", help="segmentation stage used as ground truth")
    p.set_defaults(func=cmd_pseudolabel)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BuildmonError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
