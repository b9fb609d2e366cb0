"""Ground-truth to anchor assignment, standard and forked, plus conflict reports.

Matching rule, applied per anchor set:

1. Each anchor goes to the gt with the highest IoU among gts with
   ``IoU >= iou_threshold``; ties go to the lower gt id.
2. With ``force_best_match``, every gt claims its single best anchor (lowest
   anchor index on ties) and that claim overrides step 1. When several gts
   claim the same anchor the higher IoU wins, then the lower gt id. A gt that
   overlaps no anchor at all makes no claim.

A gt left with no anchor is reported in ``unassigned_gt``. Under the forked
regime the rule runs once per category against that category's replica, so
objects of different categories never compete.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .anchor_grid import CATEGORIES, AnchorSet, ForkedAnchorSet
from .annotation_io import CATEGORY_INDEX, AnnotationCorpus, Page
from .geometry import BBox, pairwise_iou

BACKGROUND = -1


@dataclass(frozen=True)
class GtObject:
    box: BBox
    category: int
    id: int


@dataclass(frozen=True)
class MatcherConfig:
    iou_threshold: float = 0.5
    force_best_match: bool = True

    def __post_init__(self):
        if not 0 < self.iou_threshold < 1:
            raise ValueError(f"iou_threshold must be in (0, 1), got {self.iou_threshold}")


@dataclass(frozen=True)
class MatchResult:
    """Anchor-slot assignment table.

    ``assignment`` holds gt ids (``BACKGROUND`` for none): shape ``(K,)`` for
    the standard regime and ``(C, K)`` for the forked one, row ``c`` being
    replica ``c``.
    """

    regime: str
    assignment: np.ndarray
    positives_per_category: np.ndarray
    unassigned_gt: frozenset

    def slots(self) -> np.ndarray:
        """Assignment as a 2-D (replicas, K) view regardless of regime."""
        return self.assignment.reshape(-1, self.assignment.shape[-1])


def _ordered(gts: Sequence[GtObject]) -> list[GtObject]:
    ids = [g.id for g in gts]
    if len(set(ids)) != len(ids):
        raise ValueError("gt ids must be unique within a page")
    return sorted(gts, key=lambda g: g.id)


def _assign(gts: list[GtObject], anchors: np.ndarray, cfg: MatcherConfig) -> np.ndarray:
    K = len(anchors)
    out = np.full(K, BACKGROUND, dtype=np.int64)
    if not gts:
        return out
    ids = np.array([g.id for g in gts], dtype=np.int64)
    ious = pairwise_iou(np.array([g.box for g in gts], dtype=np.float64), anchors)  # (G, K)
    # gts are sorted by id, so argmax's first-max rule is the lower-id tie-break
    best_gt = ious.argmax(axis=0)
    best_iou = ious[best_gt, np.arange(K)]
    hit = best_iou >= cfg.iou_threshold
    out[hit] = ids[best_gt[hit]]
    if cfg.force_best_match:
        best_anchor = ious.argmax(axis=1)
        claim_iou = ious[np.arange(len(gts)), best_anchor]
        winners: dict[int, tuple[float, int]] = {}
        for gi in range(len(gts)):
            if claim_iou[gi] <= 0:
                continue
            a = int(best_anchor[gi])
            cur = winners.get(a)
            if cur is None or claim_iou[gi] > cur[0]:
                winners[a] = (float(claim_iou[gi]), gi)
        for a, (_, gi) in winners.items():
            out[a] = ids[gi]
    return out


def _result(regime: str, assignment: np.ndarray, gts: list[GtObject], C: int) -> MatchResult:
    cat_of = {g.id: g.category for g in gts}
    positives = np.zeros(C, dtype=np.int64)
    used, counts = np.unique(assignment[assignment != BACKGROUND], return_counts=True)
    for gid, n in zip(used.tolist(), counts.tolist()):
        positives[cat_of[gid]] += n
    unassigned = frozenset(g.id for g in gts) - frozenset(used.tolist())
    return MatchResult(regime, assignment, positives, unassigned)


def _check_gts(gts: Sequence[GtObject], C: int) -> None:
    for g in gts:
        if not 0 <= g.category < C:
            raise ValueError(f"gt {g.id} has category {g.category} outside [0, {C})")


def match_standard(
    gts: Sequence[GtObject],
    anchors: AnchorSet,
    cfg: MatcherConfig = MatcherConfig(),
    C: int = len(CATEGORIES),
) -> MatchResult:
    """One shared anchor set for all categories; each anchor holds one gt."""
    if len(anchors) == 0:
        raise ValueError("empty anchor set")
    ordered = _ordered(gts)
    _check_gts(ordered, C)
    return _result("standard", _assign(ordered, anchors.anchors, cfg), ordered, C)


def match_forked(gts: Sequence[GtObject], fork: ForkedAnchorSet, cfg: MatcherConfig = MatcherConfig()) -> MatchResult:
    """Per-category matching, each category against its own anchor replica."""
    if len(fork) == 0:
        raise ValueError("empty anchor set")
    ordered = _ordered(gts)
    _check_gts(ordered, fork.C)
    rows = [
        _assign([g for g in ordered if g.category == c], fork.replica(c).anchors, cfg)
        for c in range(fork.C)
    ]
    return _result("fork", np.stack(rows), ordered, fork.C)


def page_gt_objects(page: Page) -> list[GtObject]:
    """Page objects as normalized-coordinate gts, ids in document order."""
    sx, sy = page.width, page.height
    return [
        GtObject(
            box=BBox(o.box.x_min / sx, o.box.y_min / sy, o.box.x_max / sx, o.box.y_max / sy),
            category=CATEGORY_INDEX[o.category],
            id=i,
        )
        for i, o in enumerate(page.objects)
    ]


REGIMES = ("standard", "fork")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BOXFORGE_THREADS", "1")))
    except ValueError:
        return 1


def _page_record(volume: str, page: Page, anchors: AnchorSet, cfg: MatcherConfig, regimes) -> dict:
    gts = page_gt_objects(page)
    C = len(CATEGORIES)
    rec = {"volume": volume, "page_id": page.page_id, "n_gt": len(gts)}
    n_gt = [0] * C
    for g in gts:
        n_gt[g.category] += 1
    for regime in regimes:
        if regime == "standard":
            m = match_standard(gts, anchors, cfg, C=C)
        else:
            m = match_forked(gts, ForkedAnchorSet(anchors, C), cfg)
        missing = [0] * C
        for g in gts:
            if g.id in m.unassigned_gt:
                missing[g.category] += 1
        rec[regime] = {
            "n_unassigned": sum(missing),
            "per_category": {
                name: {"n_gt": n_gt[c], "n_unassigned": missing[c], "n_positive": int(m.positives_per_category[c])}
                for c, name in enumerate(CATEGORIES)
            },
        }
    return rec


def conflict_report(
    corpus: AnnotationCorpus,
    anchors: AnchorSet,
    cfg: MatcherConfig = MatcherConfig(),
    regimes: Sequence[str] = REGIMES,
    include_irregular: bool = False,
) -> dict:
    """Per-page and total unassigned-object counts under each regime.

    Page work is spread over ``BOXFORGE_THREADS`` threads; record order
    always follows the corpus.
    """
    for r in regimes:
        if r not in REGIMES:
            raise ValueError(f"unknown regime {r!r}")
    jobs = [(vol.title, page) for vol, page in corpus.iter_pages(include_irregular)]
    run = lambda job: _page_record(job[0], job[1], anchors, cfg, regimes)  # noqa: E731
    n = _threads()
    if n > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(n) as pool:
            pages = list(pool.map(run, jobs))
    else:
        pages = [run(j) for j in jobs]
    totals: dict = {"n_pages": len(pages), "n_gt": sum(p["n_gt"] for p in pages)}
    for regime in regimes:
        per_cat = {}
        for name in CATEGORIES:
            per_cat[name] = {
                key: sum(p[regime]["per_category"][name][key] for p in pages)
                for key in ("n_gt", "n_unassigned", "n_positive")
            }
        totals[regime] = {
            "n_unassigned": sum(p[regime]["n_unassigned"] for p in pages),
            "per_category": per_cat,
        }
    return {
        "config": {"iou_threshold": cfg.iou_threshold, "force_best_match": cfg.force_best_match},
        "pages": pages,
        "totals": totals,
    }


def assignment_report(
    corpus: AnnotationCorpus,
    anchors: AnchorSet,
    regime: str,
    cfg: MatcherConfig = MatcherConfig(),
    include_irregular: bool = False,
) -> dict:
    """Single-regime view of :func:`conflict_report` with flat page records."""
    full = conflict_report(corpus, anchors, cfg, (regime,), include_irregular)
    pages = [
        {"volume": p["volume"], "page_id": p["page_id"], "n_gt": p["n_gt"], **p[regime]}
        for p in full["pages"]
    ]
    totals = {"n_pages": full["totals"]["n_pages"], "n_gt": full["totals"]["n_gt"], **full["totals"][regime]}
    return {"regime": regime, "config": full["config"], "pages": pages, "totals": totals}
