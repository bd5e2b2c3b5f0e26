"""Independent reference implementations the library is checked against."""

import numpy as np

from buildmon.annotations import BBox, Stage


def iou_oracle(a, b):
    """Box IoU from explicit interval intersection."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)


def nms_oracle(boxes, thr):
    """O(n^2) greedy: visit in rank order, keep a box unless a kept box overlaps it."""
    order = sorted(boxes, key=lambda b: (-b.score, b.coords))
    kept = []
    for b in order:
        if all(iou_oracle(k.coords, b.coords) <= thr for k in kept):
            kept.append(b)
    return kept


def random_boxes(rng, n, span=50.0, stage=Stage.FOUNDATION):
    out = []
    for _ in range(n):
        x, y = rng.uniform(0, span, 2)
        w, h = rng.uniform(1, span / 2, 2)
        out.append(BBox(x, y, x + w, y + h, float(rng.choice([rng.random(), 0.5])), stage))
    return out


def jaccard_loss_oracle(pred, gt):
    pred, gt = np.asarray(pred, bool).ravel(), np.asarray(gt, bool).ravel()
    union = len(set(np.flatnonzero(pred)) | set(np.flatnonzero(gt)))
    inter = len(set(np.flatnonzero(pred)) & set(np.flatnonzero(gt)))
    return 0.0 if union == 0 else 1.0 - inter / union


def ap_oracle(scores, flags, n_gt):
    """Enumerate every distinct threshold, count from scratch, integrate the envelope."""
    scores, flags = np.asarray(scores, float), np.asarray(flags, bool)
    points = []
    for t in sorted(set(scores.tolist()), reverse=True):
        passed = scores >= t
        tp = int((flags & passed).sum())
        points.append((tp / n_gt, tp / int(passed.sum())))
    ap, prev = 0.0, 0.0
    for r in sorted({r for r, _ in points}):
        ap += (r - prev) * max(p for rr, p in points if rr >= r)
        prev = r
    return ap


def central_difference(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        g[i] = (f(up) - f(down)) / (2 * h)
    return g
