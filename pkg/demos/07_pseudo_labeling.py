# %% [markdown]
# # The pseudo-labeling loop
#
# Train on the labeled scenes, predict the unlabeled ones, keep confident pixels
# as pseudo-labels and retrain. Holdout IoU is tracked per round. A scripted
# mock model stands in for a network, so the gains are known in advance.

# %%
from buildmon.pseudolabel import Scene, ScriptedModel, run_pseudo_labeling
from buildmon.synthetic import MOCK_SCRIPT, PSEUDO_SPLITS, pseudolabel_pool

pool = {sid: Scene(sid, image, mask.values) for sid, image, mask in pseudolabel_pool()}
labeled = [pool[i] for i in PSEUDO_SPLITS["labeled"]]
unlabeled = [Scene(i, pool[i].image) for i in PSEUDO_SPLITS["unlabeled"]]
holdout = [pool[i] for i in PSEUDO_SPLITS["holdout"]]

model = ScriptedModel(MOCK_SCRIPT, {s.scene_id: s.mask for s in holdout})
history = run_pseudo_labeling(model, labeled, unlabeled, holdout)
for r in history.rounds:
    print(r.round, r.n_pseudo, round(r.holdout_iou, 4))

# %% [markdown]
# A regression in holdout IoU stops the loop early.

# %%
script = {"base_iou": 0.8, "gains": {"1": 0.02, "2": -0.05}}
history = run_pseudo_labeling(ScriptedModel(script, model.truth), labeled, unlabeled, holdout)
print([r.round for r in history.rounds], history.early_stopped, history.warnings)
