"""
Semi-supervised pseudo-labeling loop over a pluggable segmentation model.

The orchestrator trains on the labeled split, scores a fixed holdout, then
repeatedly labels the unlabeled pool with the latest model and continues
training on labeled + admitted pseudo-labeled scenes.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Protocol, Sequence

import numpy as np

from buildmon import schemas
from buildmon.errors import InvalidArgumentError
from buildmon.metrics import mask_iou
from buildmon.postprocess import binarize
from buildmon.raster import RasterImage

log = logging.getLogger(__name__)

MAX_PSEUDO_ROUNDS = 3


@dataclass(frozen=True, eq=False)
class Scene:
    scene_id: str
    image: RasterImage
    mask: Optional[np.ndarray] = None  # binary ground truth or pseudo-label
    valid: Optional[np.ndarray] = None  # pixels that carry a label; None means all


class SegmentationModel(Protocol):
    """What the orchestrator needs from a model.

    ``train`` returns a new opaque state; passing a previous state continues
    training from it. ``predict`` must be deterministic for a fixed state.
    """

    def train(self, scenes: Sequence[Scene], state: Any = None) -> Any: ...

    def predict(self, state: Any, scene: Scene) -> np.ndarray: ...


@dataclass(frozen=True)
class RoundRecord:
    round: int
    holdout_iou: float
    n_pseudo: int

    def to_json(self) -> dict:
        return {"round": self.round, "holdout_iou": self.holdout_iou, "n_pseudo": self.n_pseudo}


@dataclass
class PseudoLabelHistory:
    rounds: list = field(default_factory=list)
    early_stopped: bool = False
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "rounds": [r.to_json() for r in self.rounds],
            "early_stopped": self.early_stopped,
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        doc = self.to_json()
        schemas.validate(doc, "pseudolabel_history")
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def confident_pseudo_label(prob: np.ndarray, confidence_threshold: float = 0.9) -> tuple:
    """Binary label and validity mask for pixels the model is sure about."""
    prob = np.asarray(prob, dtype=np.float64)
    positive = prob >= confidence_threshold
    negative = 1.0 - prob >= confidence_threshold  # avoids 1 - 0.9 < 0.1 rounding
    return positive.astype(np.uint8), positive | negative


def holdout_iou(model: SegmentationModel, state, holdout: Sequence[Scene],
                threshold: float = 0.5) -> float:
    return float(np.mean([
        mask_iou(binarize(model.predict(state, s), threshold).as_bool(), np.asarray(s.mask) >= 0.5)
        for s in holdout
    ]))


def _check_disjoint(labeled, unlabeled, holdout):
    splits = {"labeled": labeled, "unlabeled": unlabeled, "holdout": holdout}
    owner = {}
    duplicated = set()
    for name, scenes in splits.items():
        for s in scenes:
            if s.scene_id in owner:
                duplicated.add(s.scene_id)
            owner.setdefault(s.scene_id, name)
    if duplicated:
        raise InvalidArgumentError(f"splits overlap on scene ids: {sorted(duplicated)}")


def run_pseudo_labeling(model: SegmentationModel, labeled: Sequence[Scene],
                        unlabeled: Sequence[Scene], holdout: Sequence[Scene],
                        max_rounds: int = 3, confidence_threshold: float = 0.9,
                        min_confident_fraction: float = 0.5, tolerance: float = 0.01,
                        regenerate: bool = True) -> PseudoLabelHistory:
    """Run the pseudo-labeling loop and return per-round holdout IoU.

    Round 0 is the supervised baseline. A round whose holdout IoU falls more
    than ``tolerance`` below the previous round is recorded and ends the loop.
    With ``regenerate=False`` pseudo-labels admitted in earlier rounds are
    kept instead of being replaced by the latest model's.
    """
    if not 1 <= max_rounds <= MAX_PSEUDO_ROUNDS:
        raise InvalidArgumentError(f"max_rounds must be in [1, {MAX_PSEUDO_ROUNDS}]")
    if not 0.5 < confidence_threshold <= 1.0:
        raise InvalidArgumentError("confidence_threshold must lie in (0.5, 1]")
    if not holdout:
        raise InvalidArgumentError("holdout split is empty")
    if any(s.mask is None for s in list(labeled) + list(holdout)):
        raise InvalidArgumentError("labeled and holdout scenes need ground-truth masks")
    _check_disjoint(labeled, unlabeled, holdout)

    history = PseudoLabelHistory()
    state = model.train(list(labeled))
    previous = holdout_iou(model, state, holdout)
    history.rounds.append(RoundRecord(0, previous, 0))
    if not unlabeled:
        msg = "unlabeled pool is empty; only the supervised baseline was run"
        log.warning(msg)
        history.warnings.append(msg)
        return history

    admitted = {}
    for rnd in range(1, max_rounds + 1):
        if regenerate:
            admitted = {}
        for scene in unlabeled:
            label, valid = confident_pseudo_label(model.predict(state, scene), confidence_threshold)
            if valid.mean() >= min_confident_fraction:
                admitted[scene.scene_id] = Scene(scene.scene_id, scene.image, label * valid, valid)
        state = model.train(list(labeled) + list(admitted.values()), state)
        score = holdout_iou(model, state, holdout)
        history.rounds.append(RoundRecord(rnd, score, len(admitted)))
        if score < previous - tolerance:
            msg = f"holdout IoU fell from {previous:.4f} to {score:.4f} in round {rnd}; stopping"
            log.warning(msg)
            history.warnings.append(msg)
            history.early_stopped = True
            break
        previous = score
    return history


# --- mock models ------------------------------------------------------------------

class OracleModel:
    """Predicts the known ground truth for every scene (all-zero if unknown)."""

    def __init__(self, truth: Mapping[str, np.ndarray]):
        self.truth = {k: np.asarray(v, dtype=np.float64) for k, v in truth.items()}

    def train(self, scenes, state=None):
        return 0 if state is None else state + 1

    def predict(self, state, scene):
        if scene.scene_id in self.truth:
            return self.truth[scene.scene_id].copy()
        return np.zeros((scene.image.height, scene.image.width))


def degrade_to_iou(mask: np.ndarray, target_iou: float, rng=None) -> np.ndarray:
    """Binary prediction with IoU against ``mask`` as close to ``target_iou`` as pixels allow.

    Keeps a subset of the positives (IoU = kept / positives): the first ones
    in raster order, or a random subset when ``rng`` is given.
    """
    mask = np.asarray(mask) >= 0.5
    flat = mask.ravel()
    positives = np.flatnonzero(flat)
    if rng is not None:
        positives = rng.permutation(positives)
    keep = int(round(min(1.0, max(0.0, target_iou)) * positives.size))
    out = np.zeros(flat.size)
    out[positives[:keep]] = 1.0
    return out.reshape(mask.shape)


class ScriptedModel:
    """Mock whose holdout IoU follows a script of per-round gains.

    ``script`` follows the mock-script format ``{"base_iou": float,
    "gains": {"<round>": gain}}``. The state is the number of completed
    training calls minus one, i.e. the round index. Scenes without a known
    truth get a confident all-background prediction.
    """

    def __init__(self, script: Mapping, truth: Mapping[str, np.ndarray], confidence: float = 0.98,
                 seed: Optional[int] = None):
        schemas.validate(dict(script), "mock_script")
        self.base_iou = float(script["base_iou"])
        self.gains = {int(k): float(v) for k, v in script.get("gains", {}).items()}
        self.truth = {k: np.asarray(v) for k, v in truth.items()}
        self.confidence = confidence
        self.seed = seed

    def target_iou(self, rnd: int) -> float:
        return self.base_iou + sum(g for r, g in self.gains.items() if 1 <= r <= rnd)

    def train(self, scenes, state=None):
        return 0 if state is None else state + 1

    def predict(self, state, scene):
        lo, hi = 1.0 - self.confidence, self.confidence
        if scene.scene_id not in self.truth:
            return np.full((scene.image.height, scene.image.width), lo)
        rng = None
        if self.seed is not None:
            rng = np.random.default_rng([self.seed, state, zlib.crc32(scene.scene_id.encode())])
        hard = degrade_to_iou(self.truth[scene.scene_id], self.target_iou(state), rng)
        return np.where(hard > 0, hi, lo)
