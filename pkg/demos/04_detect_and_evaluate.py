"""
From head outputs to VOC scores
===============================

Fake a forked head that fires on the anchors matched to each object, decode
its outputs into detections, then score them with AP/mAP and with
recall/precision/F-measure at the best threshold.
"""

import numpy as np

from boxforge import PostConfig, PredictionSet, canonical_spec, detect, fork_anchors, generate_anchors, match_forked
from boxforge.geometry import encode_boxes
from boxforge.matcher import page_gt_objects
from boxforge.postprocess import detection_records
from boxforge.synthetic import random_corpus
from boxforge.voc_eval import format_table, mean_ap, prf_report

rng = np.random.default_rng(1)
spec = canonical_spec()
anchors = generate_anchors(spec)
fork = fork_anchors(anchors, spec.C)
corpus = random_corpus(rng, n_volumes=2, max_pages=4, max_objects=10)

records = []
for vol, page in corpus.iter_pages():
    gts = page_gt_objects(page)
    match = match_forked(gts, fork)
    loc = np.zeros((spec.C, spec.K, 4))
    conf = np.full((spec.C, spec.K), -8.0)
    boxes = {g.id: g.box for g in gts}
    for c in range(spec.C):
        pos = np.flatnonzero(match.assignment[c] >= 0)
        if len(pos) == 0:
            continue
        target = np.array([boxes[i] for i in match.assignment[c][pos]])
        # noisy regression targets and confident logits on matched anchors
        loc[c, pos] = encode_boxes(target, anchors.anchors[pos]) + rng.normal(0, 1.0, (len(pos), 4))
        conf[c, pos] = rng.normal(0.5, 1.5, len(pos))
    # a few spurious activations
    conf[:, rng.integers(spec.K, size=200)] = rng.normal(0.0, 1.0, 200)
    dets = detect(PredictionSet("fork", loc, conf), anchors, PostConfig())
    records += detection_records(dets, page.page_id, page.width, page.height, vol.title)

n_pages = sum(1 for _ in corpus.iter_pages())
print(f"{len(records)} detections on {n_pages} pages\n")
result = mean_ap(records, corpus, per_volume=True)
print(format_table(result))

print()
for name, r in prf_report(records, corpus).items():
    print(f"{name:<6} R={r.recall:.3f} P={r.precision:.3f} F={r.f_measure:.3f} at score >= {r.threshold:.3f}")
