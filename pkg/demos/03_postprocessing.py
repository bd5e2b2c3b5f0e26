# %% [markdown]
# # Post-processing detections and segmentation
#
# Detections go through non-maximum suppression, per stage. Soft-NMS decays
# overlapping scores instead of deleting boxes. Segmentation probabilities are
# merged over a horizontal flip and over cross-validation folds.

# %%
import numpy as np

from buildmon.annotations import BBox, Stage
from buildmon.postprocess import (
    NmsConfig, NmsMode, binarize, box_iou, ensemble_folds, merge_hflip_tta, predict_hflip, soft_nms, suppress,
)

a = BBox(0, 0, 10, 10, 0.9, Stage.FOUNDATION)
b = BBox(0, 0, 6, 10, 0.8, Stage.FOUNDATION)
c = BBox(0, 0, 6, 10, 0.7, Stage.BASEMENT)
print(box_iou(a, b))

# %% [markdown]
# Hard NMS at 0.5 removes b; c survives because it belongs to another stage.

# %%
print(suppress([a, b, c]))

# %% [markdown]
# Gaussian Soft-NMS keeps b with score 0.8 * exp(-0.6^2 / 0.5).

# %%
print(soft_nms([a, b], NmsConfig(mode=NmsMode.SOFT_GAUSSIAN)))

# %% [markdown]
# Flip TTA with a model that is not flip-equivariant, then a 3-fold ensemble.

# %%
image = np.linspace(0, 1, 24).reshape(4, 6)
model = lambda x: np.clip(x + 0.1 * np.arange(x.shape[1]), 0, 1)
tta = predict_hflip(model, image)
folds = [tta, model(image), np.full_like(image, 0.5)]
mask = binarize(ensemble_folds(folds), 0.5, Stage.BUILDING_FRAME)
print(merge_hflip_tta(model(image), model(image)).shape, mask.values.sum())
