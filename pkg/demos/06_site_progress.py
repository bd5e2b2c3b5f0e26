# %% [markdown]
# # Construction progress for a site
#
# Detector and segmenter outputs become per-stage evidence. The stage graph
# orders the stages, landscaping runs in parallel, and the result is a single
# progress percentage per site.

# %%
from buildmon.overlay import save_overlay
from buildmon.progress import StageEvidence, assess_scene, progress_from_evidence, resolve_stage
from buildmon.synthetic import SCENE_NAMES, fixture_scene
from _common import output_dir

out = output_dir("progress")

for name in SCENE_NAMES:
    report = assess_scene(*fixture_scene(name))
    print(name, report.stage.key, round(report.total_progress, 2), report.height)

# %% [markdown]
# Evidence directly: a visible roof implies every earlier stage.

# %%
ev = StageEvidence((0, 0, 0, 0, 0, 0.9, 0.5))
print(resolve_stage(ev), progress_from_evidence(ev))

# %% [markdown]
# An overlay for human review.

# %%
image, outputs = fixture_scene("house")
save_overlay(out / "house_overlay.png", image, outputs.detections, polygons=[outputs.site], caption="house")
print(out / "house_overlay.png")
