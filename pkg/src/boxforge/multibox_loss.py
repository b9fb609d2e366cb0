"""Weighted category-wise multibox loss (forked heads) and the softmax baseline.

Forked loss::

    L = sum_c w_c * (L_loc^c + L_conf^c) / N_+^c

with smooth-L1 localization over positive slots, sigmoid cross-entropy on
positives (target 1) and on hard-mined negatives (target 0). Categories with
no positives contribute nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .anchor_grid import AnchorSet, ForkedAnchorSet
from .geometry import DEFAULT_VARIANCES, encode_boxes
from .matcher import BACKGROUND, GtObject, MatchResult

CANONICAL_WEIGHTS = (0.2, 0.2, 0.4, 0.2)
MODES = ("baseline", "fork")


@dataclass
class PredictionSet:
    """Raw head outputs.

    fork: ``loc`` is (C, K, 4), ``conf`` is (C, K) logits.
    baseline: ``loc`` is (K, 4), ``conf`` is (K, C + 1) logits, background last.
    """

    mode: str
    loc: np.ndarray
    conf: np.ndarray

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.loc = np.asarray(self.loc, dtype=np.float64)
        self.conf = np.asarray(self.conf, dtype=np.float64)

    @property
    def K(self) -> int:
        return self.loc.shape[-2]

    @property
    def C(self) -> int:
        return self.conf.shape[0] if self.mode == "fork" else self.conf.shape[1] - 1

    def check(self, K: int, C: int) -> None:
        if self.mode == "fork":
            want_loc, want_conf = (C, K, 4), (C, K)
        else:
            want_loc, want_conf = (K, 4), (K, C + 1)
        if self.loc.shape != want_loc or self.conf.shape != want_conf:
            raise ValueError(
                f"{self.mode} predictions need loc {want_loc} and conf {want_conf}, "
                f"got {self.loc.shape} and {self.conf.shape}"
            )

    @classmethod
    def zeros(cls, mode: str, K: int, C: int) -> "PredictionSet":
        if mode == "fork":
            return cls(mode, np.zeros((C, K, 4)), np.zeros((C, K)))
        return cls(mode, np.zeros((K, 4)), np.zeros((K, C + 1)))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "loc": self.loc.tolist(), "conf": self.conf.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionSet":
        try:
            return cls(d["mode"], d["loc"], d["conf"])
        except KeyError as e:
            raise ValueError(f"prediction document missing {e.args[0]!r}") from None


@dataclass(frozen=True)
class LossConfig:
    weights: tuple[float, ...] = CANONICAL_WEIGHTS
    negative_ratio: float = 3.0
    variances: tuple[float, float] = DEFAULT_VARIANCES

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ValueError("category weights must be non-negative")
        if self.negative_ratio < 0:
            raise ValueError("negative_ratio must be non-negative")


@dataclass
class LossBreakdown:
    """Loss terms per category.

    ``terms[c]`` is category ``c``'s contribution to ``total``. For the
    baseline, ``terms`` are the positive-slot parts normalized by the global
    positive count and ``background_conf`` holds the mined-negative
    classification loss (un-normalized).
    """

    total: float
    terms: np.ndarray
    loc: np.ndarray
    conf: np.ndarray
    n_pos: np.ndarray
    negatives: tuple[np.ndarray, ...]
    background_conf: float = 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "terms": self.terms.tolist(),
            "loc": self.loc.tolist(),
            "conf": self.conf.tolist(),
            "n_pos": self.n_pos.tolist(),
            "negatives": [n.tolist() for n in self.negatives],
            "background_conf": self.background_conf,
        }


def smooth_l1(r: np.ndarray) -> np.ndarray:
    a = np.abs(r)
    return np.where(a < 1, 0.5 * r * r, a - 0.5)


def smooth_l1_grad(r: np.ndarray) -> np.ndarray:
    return np.clip(r, -1.0, 1.0)


def _anchor_array(anchors) -> np.ndarray:
    if isinstance(anchors, ForkedAnchorSet):
        anchors = anchors.base
    if isinstance(anchors, AnchorSet):
        return anchors.anchors
    return np.asarray(anchors, dtype=np.float64)


def _gt_boxes(gts: Sequence[GtObject]) -> dict[int, tuple]:
    return {g.id: tuple(g.box) for g in gts}


def _targets(row: np.ndarray, pos: np.ndarray, boxes: dict, anchors: np.ndarray, variances) -> np.ndarray:
    gt = np.array([boxes[i] for i in row[pos].tolist()], dtype=np.float64).reshape(-1, 4)
    return encode_boxes(gt, anchors[pos], variances)


def mine_negatives(neg_loss: np.ndarray, pos: np.ndarray, n_pos: int, ratio: float) -> np.ndarray:
    """Indices of the ``ceil(ratio * n_pos)`` highest-loss non-positive slots.

    Equal losses keep the lower index. The result is sorted ascending.
    """
    candidates = np.flatnonzero(~pos)
    n = min(math.ceil(ratio * n_pos), len(candidates))
    if n == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-neg_loss[candidates], kind="stable")
    return np.sort(candidates[order[:n]])


def _prepare(pred: PredictionSet, match: MatchResult, anchors, mode: str, C: int):
    if pred.mode != mode:
        raise ValueError(f"expected {mode} predictions, got {pred.mode}")
    A = _anchor_array(anchors)
    pred.check(len(A), C)
    slots = match.slots()
    want_rows = C if mode == "fork" else 1
    if slots.shape != (want_rows, len(A)):
        raise ValueError(f"match table shape {slots.shape} does not fit {mode} with K={len(A)}, C={C}")
    return A, slots


def loss_fork(
    pred: PredictionSet,
    match: MatchResult,
    gts: Sequence[GtObject],
    anchors,
    cfg: LossConfig = LossConfig(),
    negatives: Sequence[np.ndarray] | None = None,
) -> LossBreakdown:
    """Forked loss. Pass ``negatives`` to reuse a fixed mined set."""
    C = len(cfg.weights)
    A, slots = _prepare(pred, match, anchors, "fork", C)
    boxes = _gt_boxes(gts)
    loc = np.zeros(C)
    conf = np.zeros(C)
    terms = np.zeros(C)
    n_pos = np.zeros(C, dtype=np.int64)
    mined = []
    for c in range(C):
        row = slots[c]
        pos = row != BACKGROUND
        n = int(pos.sum())
        n_pos[c] = n
        if n == 0:
            mined.append(np.empty(0, dtype=np.int64))
            continue
        r = pred.loc[c][pos] - _targets(row, pos, boxes, A, cfg.variances)
        loc[c] = smooth_l1(r).sum()
        z = pred.conf[c]
        neg_loss = np.logaddexp(0.0, z)  # -log(1 - sigmoid(z))
        neg = (
            np.asarray(negatives[c], dtype=np.int64)
            if negatives is not None
            else mine_negatives(neg_loss, pos, n, cfg.negative_ratio)
        )
        mined.append(neg)
        conf[c] = np.logaddexp(0.0, -z[pos]).sum() + neg_loss[neg].sum()
        terms[c] = cfg.weights[c] * ((loc[c] + conf[c]) / n)
    total = 0.0
    for c in range(C):
        total += terms[c]
    return LossBreakdown(float(total), terms, loc, conf, n_pos, tuple(mined))


def loss_baseline(
    pred: PredictionSet,
    match: MatchResult,
    gts: Sequence[GtObject],
    anchors,
    cfg: LossConfig = LossConfig(),
    negatives: Sequence[np.ndarray] | None = None,
) -> LossBreakdown:
    """Softmax multibox loss with one global hard-negative pool; weights unused."""
    C = len(cfg.weights)
    A, slots = _prepare(pred, match, anchors, "baseline", C)
    row = slots[0]
    cat_of = {g.id: g.category for g in gts}
    pos = row != BACKGROUND
    n = int(pos.sum())
    loc = np.zeros(C)
    conf = np.zeros(C)
    n_pos = np.zeros(C, dtype=np.int64)
    if n == 0:
        return LossBreakdown(0.0, np.zeros(C), loc, conf, n_pos, (np.empty(0, dtype=np.int64),))
    labels = np.full(len(A), C, dtype=np.int64)
    labels[pos] = [cat_of[i] for i in row[pos].tolist()]
    logp = log_softmax(pred.conf, axis=1)
    ce = -logp[np.arange(len(A)), labels]
    sl1 = smooth_l1(pred.loc[pos] - _targets(row, pos, _gt_boxes(gts), A, cfg.variances)).sum(axis=1)
    pos_idx = np.flatnonzero(pos)
    for c in range(C):
        mask = labels[pos_idx] == c
        n_pos[c] = int(mask.sum())
        loc[c] = sl1[mask].sum()
        conf[c] = ce[pos_idx[mask]].sum()
    neg = (
        np.asarray(negatives[0], dtype=np.int64)
        if negatives is not None
        else mine_negatives(-logp[:, C], pos, n, cfg.negative_ratio)
    )
    bg = float(ce[neg].sum())
    terms = (loc + conf) / n
    total = (loc.sum() + conf.sum() + bg) / n
    return LossBreakdown(float(total), terms, loc, conf, n_pos, (neg,), bg)


def compute_loss(pred, match, gts, anchors, cfg: LossConfig = LossConfig(), negatives=None) -> LossBreakdown:
    fn = loss_fork if pred.mode == "fork" else loss_baseline
    return fn(pred, match, gts, anchors, cfg, negatives)


def loss_gradient(
    pred: PredictionSet,
    match: MatchResult,
    gts: Sequence[GtObject],
    anchors,
    cfg: LossConfig = LossConfig(),
    frozen_mining: bool = True,
    negatives: Sequence[np.ndarray] | None = None,
) -> PredictionSet:
    """Analytic dL/dz for ``loc`` and ``conf``, shaped like ``pred``.

    Mining is a piecewise-constant selection, so the gradient is taken with
    the negative set held fixed: the given ``negatives`` or, if None, the set
    mined from ``pred``. With ``frozen_mining=False`` the result is the same
    almost everywhere but is not defined where the mined set switches.
    """
    if negatives is None:
        negatives = compute_loss(pred, match, gts, anchors, cfg).negatives
    elif not frozen_mining:
        raise ValueError("explicit negatives imply frozen mining")
    C = len(cfg.weights)
    grad = PredictionSet.zeros(pred.mode, pred.K, C)
    if pred.mode == "fork":
        A, slots = _prepare(pred, match, anchors, "fork", C)
        boxes = _gt_boxes(gts)
        for c in range(C):
            row = slots[c]
            pos = row != BACKGROUND
            n = int(pos.sum())
            if n == 0:
                continue
            scale = cfg.weights[c] / n
            r = pred.loc[c][pos] - _targets(row, pos, boxes, A, cfg.variances)
            grad.loc[c][pos] = scale * smooth_l1_grad(r)
            p = expit(pred.conf[c])
            neg = np.asarray(negatives[c], dtype=np.int64)
            grad.conf[c][pos] = scale * (p[pos] - 1.0)
            grad.conf[c][neg] = scale * p[neg]
        return grad
    A, slots = _prepare(pred, match, anchors, "baseline", C)
    row = slots[0]
    pos = row != BACKGROUND
    n = int(pos.sum())
    if n == 0:
        return grad
    cat_of = {g.id: g.category for g in gts}
    labels = np.full(len(A), C, dtype=np.int64)
    labels[pos] = [cat_of[i] for i in row[pos].tolist()]
    r = pred.loc[pos] - _targets(row, pos, _gt_boxes(gts), A, cfg.variances)
    grad.loc[pos] = smooth_l1_grad(r) / n
    sel = np.concatenate([np.flatnonzero(pos), np.asarray(negatives[0], dtype=np.int64)])
    p = softmax(pred.conf[sel], axis=1)
    p[np.arange(len(sel)), labels[sel]] -= 1.0
    grad.conf[sel] = p / n
    return grad
