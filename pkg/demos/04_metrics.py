# %% [markdown]
# # Metrics: IoU, Lovász losses and average precision

# %%
import numpy as np

from buildmon.annotations import BBox
from buildmon.metrics import (
    average_precision, average_precision_from_flags, lovasz_hinge_loss, lovasz_softmax_class,
    lovasz_softmax_symmetric, mask_iou, precision_recall,
)

rng = np.random.default_rng(0)
gt = (rng.random((8, 8)) < 0.4).astype(float)
pred = (rng.random((8, 8)) < 0.4).astype(float)
print("IoU", mask_iou(pred, gt))

# %% [markdown]
# At hard 0/1 predictions the Lovász-Softmax foreground term is exactly the
# Jaccard loss 1 - IoU. On soft probabilities it is its convex extension.

# %%
print(lovasz_softmax_class(pred, gt), 1 - mask_iou(pred, gt))
print(lovasz_softmax_symmetric(rng.random((8, 8)), gt))

# %% [markdown]
# The hinge variant works on raw scores and returns a gradient.

# %%
loss, grad = lovasz_hinge_loss(rng.normal(size=(8, 8)), gt)
print(loss, grad.shape)

# %% [markdown]
# Three detections against two ground-truth boxes: TP, FP, TP gives AP = 5/6.

# %%
print(average_precision_from_flags([0.9, 0.8, 0.7], [True, False, True], 2))
gts = [BBox(0, 0, 10, 10), BBox(20, 20, 30, 30)]
dets = [BBox(0, 0, 10, 10, 0.9), BBox(50, 50, 60, 60, 0.8), BBox(20, 20, 30, 30, 0.7)]
print(average_precision(dets, gts), precision_recall([0.9, 0.8, 0.7], [True, False, True], 2))
