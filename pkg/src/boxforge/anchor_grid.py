"""SSD300 anchor geometry, per-category replication, and parameter counts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import DEFAULT_VARIANCES

CATEGORIES = ("frame", "text", "face", "body")

_SSD300_MIN = (30, 60, 111, 162, 213, 264)
_SSD300_MAX = (60, 111, 162, 213, 264, 315)


@dataclass(frozen=True)
class DetectorSpec:
    """Anchor-grid architecture constants.

    ``scales[i]`` is the ``(s, s')`` pair of normalized sizes for map ``i``; the
    map gets a square of side ``s``, a square of side ``sqrt(s * s')`` and, for
    every ratio ``r`` in ``aspect_ratios[i]``, a ``r`` and a ``1/r`` box of
    scale ``s``. So ``k[i]`` must be ``2 + 2 * len(aspect_ratios[i])``.
    """

    F: int
    k: tuple[int, ...]
    g: tuple[int, ...]
    C: int
    scales: tuple[tuple[float, float], ...]
    aspect_ratios: tuple[tuple[float, ...], ...]
    variances: tuple[float, float] = DEFAULT_VARIANCES

    def __post_init__(self):
        # normalize list inputs (e.g. from JSON) into tuples
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        object.__setattr__(self, "g", tuple(int(v) for v in self.g))
        object.__setattr__(self, "scales", tuple(tuple(float(x) for x in s) for s in self.scales))
        object.__setattr__(
            self, "aspect_ratios", tuple(tuple(float(x) for x in r) for r in self.aspect_ratios)
        )
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        self.validate()

    def validate(self) -> None:
        lengths = {len(self.k), len(self.g), len(self.scales), len(self.aspect_ratios)}
        if lengths != {self.F}:
            raise ValueError(
                f"k, g, scales and aspect_ratios must all have length F={self.F}, "
                f"got {len(self.k)}, {len(self.g)}, {len(self.scales)}, {len(self.aspect_ratios)}"
            )
        if self.C < 1:
            raise ValueError("C must be positive")
        if len(self.variances) != 2 or min(self.variances) <= 0:
            raise ValueError("variances must be two positive reals")
        for i, (ki, gi, sc, ratios) in enumerate(zip(self.k, self.g, self.scales, self.aspect_ratios)):
            if gi < 1:
                raise ValueError(f"g[{i}] must be positive")
            if len(sc) != 2 or min(sc) <= 0:
                raise ValueError(f"scales[{i}] must be a pair of positive sizes")
            if any(r <= 0 for r in ratios):
                raise ValueError(f"aspect_ratios[{i}] must be positive")
            if ki != 2 + 2 * len(ratios):
                raise ValueError(
                    f"k[{i}]={ki} inconsistent with {len(ratios)} aspect ratios "
                    f"(expected {2 + 2 * len(ratios)})"
                )

    @property
    def K(self) -> int:
        return sum(ki * gi * gi for ki, gi in zip(self.k, self.g))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(ki * gi * gi for ki, gi in zip(self.k, self.g))

    def to_dict(self) -> dict:
        return {
            "F": self.F,
            "k": list(self.k),
            "g": list(self.g),
            "C": self.C,
            "scales": [list(s) for s in self.scales],
            "aspect_ratios": [list(r) for r in self.aspect_ratios],
            "variances": list(self.variances),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorSpec":
        missing = {"F", "k", "g", "C", "scales", "aspect_ratios"} - set(d)
        if missing:
            raise ValueError(f"detector spec missing fields: {sorted(missing)}")
        return cls(
            F=int(d["F"]),
            k=d["k"],
            g=d["g"],
            C=int(d["C"]),
            scales=d["scales"],
            aspect_ratios=d["aspect_ratios"],
            variances=d.get("variances", DEFAULT_VARIANCES),
        )


def canonical_spec() -> DetectorSpec:
    """SSD300 with the PASCAL VOC scale/ratio configuration and four categories."""
    return DetectorSpec(
        F=6,
        k=(4, 6, 6, 6, 4, 4),
        g=(38, 19, 10, 5, 3, 1),
        C=len(CATEGORIES),
        scales=tuple((lo / 300, hi / 300) for lo, hi in zip(_SSD300_MIN, _SSD300_MAX)),
        aspect_ratios=((2,), (2, 3), (2, 3), (2, 3), (2,), (2,)),
    )


def load_spec(path_or_name: str) -> DetectorSpec:
    if path_or_name == "canonical":
        return canonical_spec()
    with open(path_or_name) as f:
        return DetectorSpec.from_dict(json.load(f))


@dataclass(frozen=True)
class AnchorSet:
    """K anchors as an immutable (K, 4) corner-form array in [0, 1]."""

    anchors: np.ndarray
    layer_offsets: tuple[int, ...]

    def __post_init__(self):
        self.anchors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.anchors)

    def layer(self, i: int) -> np.ndarray:
        stop = self.layer_offsets[i + 1] if i + 1 < len(self.layer_offsets) else len(self.anchors)
        return self.anchors[self.layer_offsets[i]:stop]


@dataclass(frozen=True)
class ForkedAnchorSet:
    """C logical replicas of one anchor geometry; replica ``c`` serves category ``c``."""

    base: AnchorSet
    C: int

    def replica(self, c: int) -> AnchorSet:
        if not 0 <= c < self.C:
            raise IndexError(f"replica {c} out of range for C={self.C}")
        return self.base

    def __len__(self) -> int:
        return len(self.base)


def _cell_shapes(spec: DetectorSpec, i: int) -> list[tuple[float, float]]:
    s, s_next = spec.scales[i]
    shapes = [(s, s)]
    big = math.sqrt(s * s_next)
    shapes.append((big, big))
    for r in spec.aspect_ratios[i]:
        sr = math.sqrt(r)
        shapes.append((s * sr, s / sr))
        shapes.append((s / sr, s * sr))
    return shapes


def generate_anchors(spec: DetectorSpec) -> AnchorSet:
    """Anchors ordered by feature map, then row-major cell, then shape."""
    spec.validate()
    blocks = []
    offsets = []
    start = 0
    for i, gi in enumerate(spec.g):
        shapes = np.array(_cell_shapes(spec, i))  # (k, 2) as (w, h)
        idx = (np.arange(gi) + 0.5) / gi
        cy, cx = np.meshgrid(idx, idx, indexing="ij")
        centers = np.stack([cx.ravel(), cy.ravel()], axis=1)  # row-major
        c = np.repeat(centers, len(shapes), axis=0)
        wh = np.tile(shapes, (gi * gi, 1))
        block = np.concatenate([c - wh / 2, c + wh / 2], axis=1)
        blocks.append(block)
        offsets.append(start)
        start += len(block)
    anchors = np.clip(np.concatenate(blocks), 0.0, 1.0)
    return AnchorSet(anchors=anchors, layer_offsets=tuple(offsets))


def fork_anchors(anchors: AnchorSet, C: int) -> ForkedAnchorSet:
    return ForkedAnchorSet(base=anchors, C=C)


# Declarative layer table: (name, kernel, in_channels, out_channels).
_VGG16_TO_CONV5 = [
    ("conv1_1", 3, 3, 64), ("conv1_2", 3, 64, 64),
    ("conv2_1", 3, 64, 128), ("conv2_2", 3, 128, 128),
    ("conv3_1", 3, 128, 256), ("conv3_2", 3, 256, 256), ("conv3_3", 3, 256, 256),
    ("conv4_1", 3, 256, 512), ("conv4_2", 3, 512, 512), ("conv4_3", 3, 512, 512),
    ("conv5_1", 3, 512, 512), ("conv5_2", 3, 512, 512), ("conv5_3", 3, 512, 512),
]
_FC_AS_CONV = [("fc6", 3, 512, 1024), ("fc7", 1, 1024, 1024)]
_EXTRAS = [
    ("conv6_1", 1, 1024, 256), ("conv6_2", 3, 256, 512),
    ("conv7_1", 1, 512, 128), ("conv7_2", 3, 128, 256),
    ("conv8_1", 1, 256, 128), ("conv8_2", 3, 128, 256),
    ("conv9_1", 1, 256, 128), ("conv9_2", 3, 128, 256),
]
SOURCE_CHANNELS = (512, 1024, 512, 256, 256, 256)
# learned per-channel scale of the L2 normalization on conv4_3
_L2NORM_PARAMS = 512

HEADS = ("baseline", "fork", "naive_replication")


def _conv_params(kernel: int, cin: int, cout: int) -> int:
    return kernel * kernel * cin * cout + cout


def backbone_parameters() -> int:
    layers = _VGG16_TO_CONV5 + _FC_AS_CONV + _EXTRAS
    return sum(_conv_params(k, cin, cout) for _, k, cin, cout in layers) + _L2NORM_PARAMS


def head_parameters(spec: DetectorSpec, head: str) -> int:
    if spec.F != len(SOURCE_CHANNELS):
        raise ValueError(f"parameter table assumes F={len(SOURCE_CHANNELS)} source maps")
    if head == "baseline":
        per_anchor = 4 + spec.C + 1
        return sum(_conv_params(3, ch, ki * per_anchor) for ch, ki in zip(SOURCE_CHANNELS, spec.k))
    if head == "fork":
        per_anchor = 4 + 1
        one = sum(_conv_params(3, ch, ki * per_anchor) for ch, ki in zip(SOURCE_CHANNELS, spec.k))
        return spec.C * one
    raise ValueError(f"unknown head {head!r}")


def count_parameters(spec: DetectorSpec, head: str = "baseline") -> int:
    """Weights plus biases of the whole detector for the given head layout.

    ``naive_replication`` is C complete baseline networks.
    """
    if head == "naive_replication":
        return spec.C * count_parameters(spec, "baseline")
    if head not in HEADS:
        raise ValueError(f"unknown head {head!r}; expected one of {HEADS}")
    return backbone_parameters() + head_parameters(spec, head)
