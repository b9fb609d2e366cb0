"""Seeded synthetic pages and corpora for demos and tests."""

from __future__ import annotations

import numpy as np

from .anchor_grid import CATEGORIES
from .annotation_io import AnnotatedObject, AnnotationCorpus, Page, Volume
from .geometry import BBox

PAGE_W, PAGE_H = 1654, 1170
_NAMES = ("Tarou", "Hanako", "Minegishi", "Kaede", "Ryo")
_TEXTS = ("はい", "どうした?", "Hello", "やめろ!!", "……", "OK")


def random_box(rng: np.random.Generator, width: float, height: float, min_frac=0.05, max_frac=0.6) -> BBox:
    w = rng.uniform(min_frac, max_frac) * width
    h = rng.uniform(min_frac, max_frac) * height
    x = rng.uniform(0, width - w)
    y = rng.uniform(0, height - h)
    return BBox(float(x), float(y), float(x + w), float(y + h))


def random_object(rng: np.random.Generator, width: float, height: float, category: str | None = None) -> AnnotatedObject:
    category = category or CATEGORIES[int(rng.integers(len(CATEGORIES)))]
    # round to whole pixels, as real annotations are
    b = random_box(rng, width, height)
    box = BBox(*(float(round(v)) for v in b))
    if box.x_max <= box.x_min or box.y_max <= box.y_min:
        box = BBox(box.x_min, box.y_min, box.x_min + 1, box.y_min + 1)
    name = text = None
    if category in ("face", "body") and rng.random() < 0.7:
        name = _NAMES[int(rng.integers(len(_NAMES)))]
    if category == "text":
        text = _TEXTS[int(rng.integers(len(_TEXTS)))]
    return AnnotatedObject(box, category, name, text)


def random_page(rng: np.random.Generator, page_id: str, max_objects: int = 8) -> Page:
    n = int(rng.integers(0, max_objects + 1))
    return Page(
        page_id=page_id,
        width=PAGE_W,
        height=PAGE_H,
        irregular=bool(rng.random() < 0.1),
        objects=tuple(random_object(rng, PAGE_W, PAGE_H) for _ in range(n)),
    )


def random_corpus(rng: np.random.Generator, n_volumes: int = 3, max_pages: int = 4, max_objects: int = 8) -> AnnotationCorpus:
    volumes = []
    for v in range(n_volumes):
        pages = tuple(
            random_page(rng, f"{p:03d}", max_objects) for p in range(int(rng.integers(0, max_pages + 1)))
        )
        genre = None if rng.random() < 0.3 else ("sports", "romance", "fantasy")[int(rng.integers(3))]
        volumes.append(Volume(title=f"Volume{v:03d}", pages=pages, genre=genre))
    return AnnotationCorpus(tuple(volumes))


def overlap_page(rng: np.random.Generator, page_id: str) -> Page:
    """A page whose frame and body share one box exactly, plus a distant text."""
    w = rng.uniform(0.3, 0.5) * PAGE_W
    h = rng.uniform(0.3, 0.5) * PAGE_H
    x = rng.uniform(0, PAGE_W / 2 - w / 2)
    y = rng.uniform(0, PAGE_H - h)
    shared = BBox(*(float(round(v)) for v in (x, y, x + w, y + h)))
    text = BBox(PAGE_W * 0.80, PAGE_H * 0.05, PAGE_W * 0.90, PAGE_H * 0.25)
    return Page(
        page_id=page_id,
        width=PAGE_W,
        height=PAGE_H,
        objects=(
            AnnotatedObject(shared, "frame"),
            AnnotatedObject(shared, "body", character_name=_NAMES[0]),
            AnnotatedObject(text, "text", text_content=_TEXTS[0]),
        ),
    )


def conflict_corpus(seed: int = 0, n_pages: int = 8) -> AnnotationCorpus:
    """Pages of co-located, identically shaped objects of different categories."""
    rng = np.random.default_rng(seed)
    pages = tuple(overlap_page(rng, f"{i:03d}") for i in range(n_pages))
    return AnnotationCorpus((Volume(title="SyntheticOverlap", pages=pages),))
