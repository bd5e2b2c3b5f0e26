import copy
import json
import logging

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from buildmon import schemas
from buildmon.errors import InvalidArgumentError
from buildmon.metrics import mask_iou
from buildmon.pseudolabel import (
    OracleModel,
    Scene,
    ScriptedModel,
    confident_pseudo_label,
    degrade_to_iou,
    run_pseudo_labeling,
)
from buildmon.synthetic import MOCK_SCRIPT, PSEUDO_SPLITS, pseudolabel_pool

POOL = {sid: Scene(sid, image, mask.values) for sid, image, mask in pseudolabel_pool()}


def split(name, with_mask=True):
    return [POOL[i] if with_mask else Scene(i, POOL[i].image) for i in PSEUDO_SPLITS[name]]


class RecordingModel(ScriptedModel):
    """Scripted mock that records what it is trained on."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.trained_on = []

    def train(self, scenes, state=None):
        self.trained_on.append([(s.scene_id, None if s.mask is None else np.array(s.mask),
                                 None if s.valid is None else np.array(s.valid)) for s in scenes])
        return super().train(scenes, state)


def test_confident_pseudo_label():
    label, valid = confident_pseudo_label(np.array([0.95, 0.9, 0.5, 0.1, 0.05]), 0.9)
    assert_array_equal(label, [1, 1, 0, 0, 0])
    assert_array_equal(valid, [True, True, False, True, True])


def test_degrade_to_iou():
    mask = np.zeros((20, 20))
    mask[5:15, 5:15] = 1
    for target in (0.0, 0.37, 0.8, 1.0):
        assert mask_iou(degrade_to_iou(mask, target), mask) == pytest.approx(round(target * 100) / 100)
    out = degrade_to_iou(mask, 0.5, np.random.default_rng(0))
    assert mask_iou(out, mask) == 0.5


def test_oracle_model_constant_iou():
    truth = {sid: s.mask for sid, s in POOL.items()}
    history = run_pseudo_labeling(OracleModel(truth), split("labeled"), split("unlabeled", False),
                                  split("holdout"))
    assert [r.holdout_iou for r in history.rounds] == [1.0] * 4
    assert [r.n_pseudo for r in history.rounds] == [0, 3, 3, 3]
    assert not history.early_stopped


def test_empty_unlabeled_pool(caplog):
    model = ScriptedModel(MOCK_SCRIPT, {s.scene_id: s.mask for s in split("holdout")})
    with caplog.at_level(logging.WARNING):
        history = run_pseudo_labeling(model, split("labeled"), [], split("holdout"))
    assert len(history.rounds) == 1
    assert history.warnings and "empty" in history.warnings[0]
    assert "empty" in caplog.text


def test_scripted_mock_gains():
    holdout = split("holdout")
    before = [np.array(s.mask) for s in holdout]
    model = RecordingModel(MOCK_SCRIPT, {s.scene_id: s.mask for s in holdout})
    history = run_pseudo_labeling(model, split("labeled"), split("unlabeled", False), holdout)
    ious = [r.holdout_iou for r in history.rounds]
    assert [r.round for r in history.rounds] == [0, 1, 2, 3]
    assert ious == pytest.approx([0.80, 0.81, 0.82, 0.83], abs=1e-12)
    assert all(b > a for a, b in zip(ious, ious[1:]))
    for s, m in zip(holdout, before):
        assert_array_equal(s.mask, m)
    # holdout scenes are never used for training
    trained_ids = {sid for call in model.trained_on for sid, _, _ in call}
    assert trained_ids.isdisjoint(PSEUDO_SPLITS["holdout"])
    doc = json.loads(history.dumps())
    schemas.validate(doc, "pseudolabel_history")


def test_admitted_labels_obey_confidence_rule():
    truth = {sid: s.mask for sid, s in POOL.items()}

    class Hesitant(OracleModel):
        def predict(self, state, scene):
            p = super().predict(state, scene)
            p = np.where(p > 0, 0.95, 0.02)
            p[:4, :] = 0.6  # unconfident band
            return p

    model = Hesitant(truth)
    recorded = []
    original_train = model.train

    def train(scenes, state=None):
        recorded.append(list(scenes))
        return original_train(scenes, state)

    model.train = train
    run_pseudo_labeling(model, split("labeled"), split("unlabeled", False), split("holdout"), max_rounds=1)
    pseudo = [s for s in recorded[-1] if s.scene_id in PSEUDO_SPLITS["unlabeled"]]
    assert len(pseudo) == 3
    for s in pseudo:
        assert not s.valid[:4, :].any()
        assert s.valid[4:, :].all()
        assert not s.mask[~s.valid].any()


def test_low_confidence_scenes_not_admitted():
    truth = {s.scene_id: s.mask for s in split("holdout")}
    unsure = ScriptedModel(MOCK_SCRIPT, truth, confidence=0.7)
    history = run_pseudo_labeling(unsure, split("labeled"), split("unlabeled", False), split("holdout"))
    assert [r.n_pseudo for r in history.rounds] == [0, 0, 0, 0]


def test_early_stop_on_regression():
    script = copy.deepcopy(MOCK_SCRIPT)
    script["gains"] = {"1": 0.01, "2": -0.05, "3": 0.1}
    model = ScriptedModel(script, {s.scene_id: s.mask for s in split("holdout")})
    history = run_pseudo_labeling(model, split("labeled"), split("unlabeled", False), split("holdout"))
    assert [r.round for r in history.rounds] == [0, 1, 2]
    assert history.early_stopped
    assert "fell" in history.warnings[0]


def test_accumulating_pseudo_labels():
    truth = {sid: s.mask for sid, s in POOL.items()}
    history = run_pseudo_labeling(OracleModel(truth), split("labeled"), split("unlabeled", False),
                                  split("holdout"), regenerate=False)
    assert [r.n_pseudo for r in history.rounds] == [0, 3, 3, 3]


def test_overlapping_splits_rejected():
    with pytest.raises(InvalidArgumentError, match="pl_04"):
        run_pseudo_labeling(OracleModel({}), split("labeled"), split("unlabeled", False),
                            split("holdout") + [POOL["pl_04"]])


@pytest.mark.parametrize("kwargs", [{"max_rounds": 0}, {"max_rounds": 4}, {"confidence_threshold": 0.4}])
def test_argument_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        run_pseudo_labeling(OracleModel({}), split("labeled"), [], split("holdout"), **kwargs)


def test_seeded_mock_is_deterministic():
    truth = {s.scene_id: s.mask for s in split("holdout")}
    runs = [run_pseudo_labeling(ScriptedModel(MOCK_SCRIPT, truth, seed=7), split("labeled"),
                                split("unlabeled", False), split("holdout")).dumps() for _ in range(2)]
    assert runs[0] == runs[1]
