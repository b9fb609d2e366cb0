"""
Weighted category-wise loss
===========================

Evaluate the forked loss on random head outputs, inspect the per-category
terms, and confirm the analytic gradient against finite differences.
"""

import numpy as np

from boxforge import (
    BBox,
    GtObject,
    LossConfig,
    PredictionSet,
    canonical_spec,
    fork_anchors,
    generate_anchors,
    loss_fork,
    loss_gradient,
    match_forked,
)

rng = np.random.default_rng(0)
spec = canonical_spec()
anchors = generate_anchors(spec)
fork = fork_anchors(anchors, spec.C)

gts = [
    GtObject(BBox(0.05, 0.05, 0.55, 0.60), 0, 0),  # frame
    GtObject(BBox(0.60, 0.10, 0.70, 0.40), 1, 1),  # text
    GtObject(BBox(0.20, 0.15, 0.32, 0.30), 2, 2),  # face
    GtObject(BBox(0.05, 0.05, 0.55, 0.60), 3, 3),  # body, same box as the frame
]
match = match_forked(gts, fork)

pred = PredictionSet(
    "fork",
    rng.normal(0, 0.5, (spec.C, spec.K, 4)),
    rng.normal(-2, 1, (spec.C, spec.K)),
)
cfg = LossConfig()  # weights (0.2, 0.2, 0.4, 0.2), 3:1 hard negatives
out = loss_fork(pred, match, gts, anchors, cfg)
for name, n, term, neg in zip(("frame", "text", "face", "body"), out.n_pos, out.terms, out.negatives):
    print(f"{name:<5} positives={n:>3} mined negatives={len(neg):>3} term={term:.4f}")
print(f"total loss {out.total:.4f}")

# Gradient check on a handful of confidence logits, mining held fixed.
grad = loss_gradient(pred, match, gts, anchors, cfg, negatives=out.negatives)
h = 1e-4
worst = 0.0
for c, k in [(2, int(np.flatnonzero(match.assignment[2] >= 0)[0])), (0, int(out.negatives[0][0]))]:
    up, down = pred.conf.copy(), pred.conf.copy()
    up[c, k] += h
    down[c, k] -= h
    fd = (
        loss_fork(PredictionSet("fork", pred.loc, up), match, gts, anchors, cfg, out.negatives).total
        - loss_fork(PredictionSet("fork", pred.loc, down), match, gts, anchors, cfg, out.negatives).total
    ) / (2 * h)
    worst = max(worst, abs(fd - grad.conf[c, k]))
print(f"largest finite-difference discrepancy: {worst:.2e}")
