"""PASCAL VOC style AP/mAP and recall/precision/F-measure at the best threshold.

Detections are matched greedily in descending score order (stable for equal
scores): each takes the still-unmatched gt on its page with the highest IoU
at or above the threshold, lower gt index on ties. Unmatched detections are
false positives.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .anchor_grid import CATEGORIES
from .annotation_io import CATEGORY_INDEX, AnnotationCorpus
from .geometry import pairwise_iou

INTERPOLATIONS = ("all_point", "eleven_point")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    interpolation: str = "all_point"

    def __post_init__(self):
        if not 0 < self.iou_threshold < 1:
            raise ValueError("iou_threshold must lie in (0, 1)")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")


class ScoredBox(NamedTuple):
    page: Hashable
    score: float
    box: tuple


def match_detections(dets: Sequence[ScoredBox], gts: Mapping[Hashable, np.ndarray], iou_threshold: float):
    """Greedy matching; returns (score-order indices, true-positive flags in that order)."""
    scores = np.array([d.score for d in dets], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    taken = {page: np.zeros(len(boxes), dtype=bool) for page, boxes in gts.items()}
    tp = np.zeros(len(dets), dtype=bool)
    for rank, i in enumerate(order):
        d = dets[i]
        boxes = gts.get(d.page)
        if boxes is None or len(boxes) == 0:
            continue
        ious = pairwise_iou(np.asarray(d.box, dtype=np.float64), boxes)[0]
        ious[taken[d.page]] = -1.0
        j = int(ious.argmax())
        if ious[j] >= iou_threshold:
            taken[d.page][j] = True
            tp[rank] = True
    return order, tp


def _n_gt(gts: Mapping[Hashable, np.ndarray]) -> int:
    return sum(len(b) for b in gts.values())


def precision_recall(dets, gts, iou_threshold: float = 0.5):
    """Cumulative (recall, precision) arrays along the score-ranked list."""
    _, tp = match_detections(dets, gts, iou_threshold)
    ctp = np.cumsum(tp)
    n = _n_gt(gts)
    rec = ctp / n if n else np.zeros(len(tp))
    prec = ctp / np.arange(1, len(tp) + 1)
    return rec, prec


def ap_from_curve(rec: np.ndarray, prec: np.ndarray, interpolation: str = "all_point") -> float:
    if interpolation == "eleven_point":
        ap = 0.0
        for i in range(11):
            above = prec[rec >= i / 10]
            ap += (above.max() if len(above) else 0.0) / 11
        return float(ap)
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def average_precision(
    dets: Sequence[ScoredBox], gts: Mapping[Hashable, np.ndarray], cfg: EvalConfig = EvalConfig()
) -> float | None:
    """AP of one category; None when the category has no ground truth."""
    gts = {k: np.asarray(v, dtype=np.float64).reshape(-1, 4) for k, v in gts.items()}
    if _n_gt(gts) == 0:
        return None
    if len(dets) == 0:
        return 0.0
    rec, prec = precision_recall(dets, gts, cfg.iou_threshold)
    return ap_from_curve(rec, prec, cfg.interpolation)


class PRF(NamedTuple):
    recall: float
    precision: float
    f_measure: float
    threshold: float


def _f(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def prf_at_best_threshold(
    dets: Sequence[ScoredBox], gts: Mapping[Hashable, np.ndarray], iou_threshold: float = 0.5
) -> PRF:
    """Sweep every distinct score as a ``score >= t`` cut-off and keep the best F.

    Equal F keeps the higher threshold. No detections gives
    ``PRF(0, 0, 0, inf)``.
    """
    if len(dets) == 0:
        return PRF(0.0, 0.0, 0.0, math.inf)
    gts = {k: np.asarray(v, dtype=np.float64).reshape(-1, 4) for k, v in gts.items()}
    n_gt = _n_gt(gts)
    order, tp = match_detections(dets, gts, iou_threshold)
    sorted_scores = np.array([dets[i].score for i in order])
    ctp = np.cumsum(tp)
    best = None
    # last position of each distinct score in descending order
    ends = np.flatnonzero(np.append(sorted_scores[1:] != sorted_scores[:-1], True))
    for e in ends:
        hits = int(ctp[e])
        r = hits / n_gt if n_gt else 0.0
        p = hits / (e + 1)
        f = _f(p, r)
        if best is None or f > best.f_measure:
            best = PRF(r, p, f, float(sorted_scores[e]))
    return best


# Corpus-level evaluation.

@dataclass
class EvalResult:
    ap: tuple  # per category, None where the category has no ground truth
    mAP: float | None
    interpolation: str
    iou_threshold: float = 0.5
    categories: tuple = CATEGORIES
    per_volume: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "interpolation": self.interpolation,
            "iou_threshold": self.iou_threshold,
            "mAP": self.mAP,
            "ap": dict(zip(self.categories, self.ap)),
        }
        if self.per_volume:
            d["per_volume"] = {t: r.to_dict() for t, r in self.per_volume.items()}
        return d


def _mean(aps, label=""):
    present = [a for a in aps if a is not None]
    missing = [CATEGORIES[i] for i, a in enumerate(aps) if a is None]
    if missing:
        warnings.warn(f"{label}no ground truth for {missing}; excluded from mAP", stacklevel=3)
    return sum(present) / len(present) if present else None


def corpus_ground_truth(corpus: AnnotationCorpus, include_irregular: bool = False):
    """Per-category {(volume, page_id): (n, 4) pixel boxes}."""
    out = [dict() for _ in CATEGORIES]
    for vol, page in corpus.iter_pages(include_irregular):
        key = (vol.title, page.page_id)
        for c in range(len(CATEGORIES)):
            out[c][key] = np.array(
                [tuple(o.box) for o in page.objects if CATEGORY_INDEX[o.category] == c], dtype=np.float64
            ).reshape(-1, 4)
    return out


def _resolver(corpus: AnnotationCorpus, include_irregular: bool):
    by_id: dict = {}
    skipped = set()
    for vol in corpus.volumes:
        for page in vol.pages:
            if page.irregular and not include_irregular:
                skipped.add((vol.title, page.page_id))
                continue
            by_id.setdefault(page.page_id, []).append(vol.title)

    def resolve(rec):
        pid = str(rec["page_id"])
        vol = rec.get("volume")
        if vol is not None:
            key = (vol, pid)
            if key in skipped:
                return None
            if vol not in by_id.get(pid, ()):
                raise ValueError(f"detection on unknown page {key}")
            return key
        titles = by_id.get(pid, [])
        if len(titles) == 1:
            return (titles[0], pid)
        if not titles:
            if any(k[1] == pid for k in skipped):
                return None
            raise ValueError(f"detection on unknown page {pid!r}")
        raise ValueError(f"page_id {pid!r} is ambiguous across volumes; add a 'volume' field")

    return resolve


def _category(value) -> int:
    if isinstance(value, str):
        if value not in CATEGORY_INDEX:
            raise ValueError(f"unknown category {value!r}")
        return CATEGORY_INDEX[value]
    c = int(value)
    if not 0 <= c < len(CATEGORIES):
        raise ValueError(f"category index {c} out of range")
    return c


def group_detections(records: Iterable[dict], corpus: AnnotationCorpus, include_irregular: bool = False):
    """Split detection records into per-category :class:`ScoredBox` lists."""
    resolve = _resolver(corpus, include_irregular)
    out = [[] for _ in CATEGORIES]
    for rec in records:
        key = resolve(rec)
        if key is None:
            continue
        out[_category(rec["category"])].append(ScoredBox(key, float(rec["score"]), tuple(rec["box"])))
    return out


def mean_ap(
    records: Iterable[dict],
    corpus: AnnotationCorpus,
    cfg: EvalConfig = EvalConfig(),
    per_volume: bool = False,
    include_irregular: bool = False,
) -> EvalResult:
    """Per-category AP and their mean, optionally broken down by volume."""
    dets = group_detections(records, corpus, include_irregular)
    gts = corpus_ground_truth(corpus, include_irregular)
    aps = tuple(average_precision(dets[c], gts[c], cfg) for c in range(len(CATEGORIES)))
    result = EvalResult(aps, _mean(aps), cfg.interpolation, cfg.iou_threshold)
    if per_volume:
        for vol in corpus.volumes:
            keep = lambda key: key[0] == vol.title  # noqa: E731
            v_aps = tuple(
                average_precision(
                    [d for d in dets[c] if keep(d.page)],
                    {k: b for k, b in gts[c].items() if keep(k)},
                    cfg,
                )
                for c in range(len(CATEGORIES))
            )
            result.per_volume[vol.title] = EvalResult(v_aps, _mean(v_aps, f"{vol.title}: "), cfg.interpolation, cfg.iou_threshold)
    return result


def prf_report(records: Iterable[dict], corpus: AnnotationCorpus, iou_threshold: float = 0.5, include_irregular=False):
    """Best-threshold recall/precision/F for every category with ground truth."""
    dets = group_detections(records, corpus, include_irregular)
    gts = corpus_ground_truth(corpus, include_irregular)
    return {
        CATEGORIES[c]: prf_at_best_threshold(dets[c], gts[c], iou_threshold)
        for c in range(len(CATEGORIES))
        if _n_gt(gts[c])
    }


def load_detections(fh) -> list[dict]:
    out = []
    for n, line in enumerate(fh, 1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"detections line {n}: {e.msg}") from None
        missing = {"page_id", "category", "score", "box"} - set(rec)
        if missing:
            raise ValueError(f"detections line {n}: missing {sorted(missing)}")
        out.append(rec)
    return out


def _fmt(v) -> str:
    return "  n/a" if v is None else f"{v:.3f}"


def format_table(result: EvalResult) -> str:
    """mAP then per-category AP, one row overall plus one per volume."""
    header = ["", "mAP", *result.categories]
    rows = [["all", _fmt(result.mAP), *(_fmt(a) for a in result.ap)]]
    for title, r in result.per_volume.items():
        rows.append([title, _fmt(r.mAP), *(_fmt(a) for a in r.ap)])
    width0 = max(len(r[0]) for r in rows + [header])
    lines = [f"{header[0]:<{width0}}  " + "  ".join(f"{h:>6}" for h in header[1:])]
    for r in rows:
        lines.append(f"{r[0]:<{width0}}  " + "  ".join(f"{v:>6}" for v in r[1:]))
    lines.append(f"(AP at IoU >= {result.iou_threshold:g}, {result.interpolation} interpolation)")
    return "\n".join(lines)
