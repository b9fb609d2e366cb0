"""Axis-aligned box arithmetic.

Boxes are ``(x_min, y_min, x_max, y_max)`` in whatever coordinate space the
caller uses (pixels for annotations, normalized [0, 1] for anchors). Offsets
follow the center-size parameterization used by SSD-style detectors.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_VARIANCES = (0.1, 0.2)


class BBox(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @classmethod
    def checked(cls, x_min, y_min, x_max, y_max) -> "BBox":
        """Build a box, raising ``ValueError`` if the corners are out of order."""
        b = cls(float(x_min), float(y_min), float(x_max), float(y_max))
        if not (b.x_min <= b.x_max and b.y_min <= b.y_max):
            raise ValueError(f"invalid box {tuple(b)}: min corner exceeds max corner")
        return b

    @classmethod
    def from_center(cls, cx, cy, w, h) -> "BBox":
        return cls(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def center_size(self) -> tuple[float, float, float, float]:
        return (
            (self.x_min + self.x_max) / 2,
            (self.y_min + self.y_max) / 2,
            self.width,
            self.height,
        )


class EncodedOffsets(NamedTuple):
    d_cx: float
    d_cy: float
    d_w: float
    d_h: float


def area(b: BBox) -> float:
    return (b[2] - b[0]) * (b[3] - b[1])


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = area(a) + area(b) - inter
    if union <= 0:
        return 0.0
    return inter / union


def encode(gt: BBox, anchor: BBox, variances: Sequence[float] = DEFAULT_VARIANCES) -> EncodedOffsets:
    """Offsets that move ``anchor`` onto ``gt``.

    Raises:
        ValueError: if either box has zero width or height.
    """
    gcx, gcy, gw, gh = BBox(*gt).center_size()
    acx, acy, aw, ah = BBox(*anchor).center_size()
    if aw <= 0 or ah <= 0:
        raise ValueError(f"degenerate anchor {tuple(anchor)}")
    if gw <= 0 or gh <= 0:
        raise ValueError(f"cannot encode degenerate box {tuple(gt)}: log of zero size")
    v1, v2 = variances
    return EncodedOffsets(
        (gcx - acx) / aw / v1,
        (gcy - acy) / ah / v1,
        math.log(gw / aw) / v2,
        math.log(gh / ah) / v2,
    )


def decode(off: Sequence[float], anchor: BBox, variances: Sequence[float] = DEFAULT_VARIANCES) -> BBox:
    acx, acy, aw, ah = BBox(*anchor).center_size()
    if aw <= 0 or ah <= 0:
        raise ValueError(f"degenerate anchor {tuple(anchor)}")
    v1, v2 = variances
    d_cx, d_cy, d_w, d_h = off
    cx = acx + d_cx * v1 * aw
    cy = acy + d_cy * v1 * ah
    w = aw * math.exp(d_w * v2)
    h = ah * math.exp(d_h * v2)
    x0, x1 = cx - w / 2, cx + w / 2
    y0, y1 = cy - h / 2, cy + h / 2
    return BBox(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


# Vectorized forms over (N, 4) arrays.

def box_area(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def pairwise_iou(boxes1: np.ndarray, boxes2: np.ndarray) -> np.ndarray:
    """(N, M) IoU matrix between two box arrays."""
    b1 = np.asarray(boxes1, dtype=np.float64).reshape(-1, 4)
    b2 = np.asarray(boxes2, dtype=np.float64).reshape(-1, 4)
    tl = np.maximum(b1[:, None, :2], b2[None, :, :2])
    br = np.minimum(b1[:, None, 2:], b2[None, :, 2:])
    wh = np.clip(br - tl, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = box_area(b1)[:, None] + box_area(b2)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def to_center_size(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return np.concatenate(
        [(boxes[..., :2] + boxes[..., 2:]) / 2, boxes[..., 2:] - boxes[..., :2]], axis=-1
    )


def from_center_size(cs: np.ndarray) -> np.ndarray:
    cs = np.asarray(cs, dtype=np.float64)
    half = cs[..., 2:] / 2
    return np.concatenate([cs[..., :2] - half, cs[..., :2] + half], axis=-1)


def encode_boxes(gt: np.ndarray, anchors: np.ndarray, variances=DEFAULT_VARIANCES) -> np.ndarray:
    """Row-wise :func:`encode` for aligned (N, 4) arrays."""
    g = to_center_size(gt)
    a = to_center_size(anchors)
    if np.any(a[..., 2:] <= 0):
        raise ValueError("degenerate anchor in encode_boxes")
    if np.any(g[..., 2:] <= 0):
        raise ValueError("cannot encode degenerate box: log of zero size")
    v1, v2 = variances
    return np.concatenate(
        [(g[..., :2] - a[..., :2]) / a[..., 2:] / v1, np.log(g[..., 2:] / a[..., 2:]) / v2],
        axis=-1,
    )


def decode_boxes(offsets: np.ndarray, anchors: np.ndarray, variances=DEFAULT_VARIANCES) -> np.ndarray:
    """Row-wise :func:`decode`; returns corner-form boxes."""
    off = np.asarray(offsets, dtype=np.float64)
    a = to_center_size(anchors)
    v1, v2 = variances
    cs = np.concatenate(
        [a[..., :2] + off[..., :2] * v1 * a[..., 2:], a[..., 2:] * np.exp(off[..., 2:] * v2)],
        axis=-1,
    )
    return from_center_size(cs)
