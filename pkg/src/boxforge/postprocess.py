"""Turn head outputs into scored detections: decode, threshold, NMS, top-k."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit, softmax

from .anchor_grid import CATEGORIES, ForkedAnchorSet
from .geometry import DEFAULT_VARIANCES, BBox, decode_boxes, pairwise_iou
from .multibox_loss import PredictionSet


@dataclass(frozen=True)
class Detection:
    box: BBox
    category: int
    score: float


@dataclass(frozen=True)
class PostConfig:
    score_threshold: float = 0.01
    nms_iou: float = 0.45
    top_k: int = 200

    def __post_init__(self):
        if not 0 < self.score_threshold < 1 or not 0 < self.nms_iou < 1:
            raise ValueError("score_threshold and nms_iou must lie in (0, 1)")
        if self.top_k < 0:
            raise ValueError("top_k must be non-negative")


def nms_indices(boxes: np.ndarray, scores: np.ndarray, nms_iou: float) -> np.ndarray:
    """Greedy NMS over arrays; returns kept indices in descending-score order."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    keep = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        rest = order[pos + 1:]
        if len(rest):
            over = pairwise_iou(boxes[i], boxes[rest])[0] > nms_iou
            suppressed[rest[over]] = True
    return np.array(keep, dtype=np.int64)


def nms(dets: Sequence[Detection], nms_iou: float = 0.45) -> list[Detection]:
    """Keep a detection iff its IoU with every higher-ranked kept one is <= ``nms_iou``.

    Ranking is by score, earlier input first on ties. Callers split by
    category beforehand.
    """
    if not dets:
        return []
    keep = nms_indices(np.array([d.box for d in dets]), np.array([d.score for d in dets]), nms_iou)
    return [dets[i] for i in keep]


def class_scores(pred: PredictionSet) -> np.ndarray:
    """(C, K) per-category probabilities, background dropped."""
    if pred.mode == "fork":
        return expit(pred.conf)
    return softmax(pred.conf, axis=1)[:, :-1].T


def detect(
    pred: PredictionSet,
    anchors,
    cfg: PostConfig = PostConfig(),
    variances: Sequence[float] = DEFAULT_VARIANCES,
) -> list[Detection]:
    """Detections sorted by score (ties: category, then anchor index), at most ``top_k``."""
    A = anchors.base.anchors if isinstance(anchors, ForkedAnchorSet) else getattr(anchors, "anchors", anchors)
    A = np.asarray(A, dtype=np.float64)
    C = pred.C
    pred.check(len(A), C)
    scores = class_scores(pred)
    shared = decode_boxes(pred.loc, A, variances) if pred.mode == "baseline" else None
    found = []  # (score, category, anchor, box)
    for c in range(C):
        idx = np.flatnonzero(scores[c] >= cfg.score_threshold)
        if len(idx) == 0:
            continue
        boxes = shared[idx] if shared is not None else decode_boxes(pred.loc[c][idx], A[idx], variances)
        keep = nms_indices(boxes, scores[c][idx], cfg.nms_iou)
        for j in keep:
            found.append((float(scores[c][idx[j]]), c, int(idx[j]), boxes[j]))
    found.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [Detection(BBox(*map(float, b)), c, s) for s, c, _, b in found[: cfg.top_k]]


def detection_records(dets: Iterable[Detection], page_id: str, width: float, height: float, volume: str | None = None):
    """JSON-lines records with boxes scaled back to pixel coordinates."""
    for d in dets:
        rec = {
            "page_id": page_id,
            "category": CATEGORIES[d.category],
            "score": d.score,
            "box": [d.box.x_min * width, d.box.y_min * height, d.box.x_max * width, d.box.y_max * height],
        }
        if volume is not None:
            rec["volume"] = volume
        yield rec


def write_detections_jsonl(records: Iterable[dict], fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
