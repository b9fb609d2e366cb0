"""Manga109-style annotation corpus: data model, JSON reader/writer, statistics.

Document layout::

    {"schema_version": 1,
     "volumes": [{"title": ..., "genre": ... | null,
                  "pages": [{"page_id": ..., "width": ..., "height": ...,
                             "irregular": false,
                             "objects": [{"category": "face",
                                          "box": [x_min, y_min, x_max, y_max],
                                          "character_name": ...}]}]}]}
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, fields, replace
from typing import Iterable, Iterator

from .anchor_grid import CATEGORIES
from .geometry import BBox

SCHEMA_VERSION = 1
CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}
_CHARACTER_CATEGORIES = ("face", "body")


class AnnotationError(ValueError):
    """Malformed or invariant-violating annotation document."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class AnnotatedObject:
    box: BBox
    category: str
    character_name: str | None = None
    text_content: str | None = None

    @property
    def category_index(self) -> int:
        return CATEGORY_INDEX[self.category]


@dataclass(frozen=True)
class Page:
    page_id: str
    width: float
    height: float
    irregular: bool = False
    objects: tuple[AnnotatedObject, ...] = ()


@dataclass(frozen=True)
class Volume:
    title: str
    pages: tuple[Page, ...] = ()
    genre: str | None = None


@dataclass(frozen=True)
class AnnotationCorpus:
    volumes: tuple[Volume, ...] = ()

    def iter_pages(self, include_irregular: bool = False) -> Iterator[tuple[Volume, Page]]:
        for vol in self.volumes:
            for page in vol.pages:
                if page.irregular and not include_irregular:
                    continue
                yield vol, page

    def volume(self, title: str) -> Volume:
        for vol in self.volumes:
            if vol.title == title:
                return vol
        raise KeyError(title)


def _check_object(obj: AnnotatedObject, page: Page, path: str) -> None:
    if obj.category not in CATEGORY_INDEX:
        raise AnnotationError(path, f"unknown category {obj.category!r}; expected one of {CATEGORIES}")
    b = obj.box
    if not (0 <= b.x_min <= b.x_max <= page.width and 0 <= b.y_min <= b.y_max <= page.height):
        raise AnnotationError(
            path, f"{obj.category} box {list(b)} outside page bounds {page.width}x{page.height}"
        )
    if obj.character_name is not None and obj.category not in _CHARACTER_CATEGORIES:
        raise AnnotationError(path, f"character_name on a {obj.category} object")
    if obj.text_content is not None and obj.category != "text":
        raise AnnotationError(path, f"text_content on a {obj.category} object")


def validate_corpus(corpus: AnnotationCorpus) -> AnnotationCorpus:
    for vi, vol in enumerate(corpus.volumes):
        seen = set()
        for pi, page in enumerate(vol.pages):
            path = f"volumes[{vi}].pages[{pi}]"
            if page.page_id in seen:
                raise AnnotationError(path, f"duplicate page_id {page.page_id!r} in volume {vol.title!r}")
            seen.add(page.page_id)
            if not (page.width > 0 and page.height > 0):
                raise AnnotationError(path, "width and height must be positive")
            for oi, obj in enumerate(page.objects):
                _check_object(obj, page, f"{path}.objects[{oi}]")
    return corpus


def _require(d, key, path, types):
    if not isinstance(d, dict):
        raise AnnotationError(path, f"expected an object, got {type(d).__name__}")
    if key not in d:
        raise AnnotationError(path, f"missing field {key!r}")
    value = d[key]
    if not isinstance(value, types) or isinstance(value, bool) and bool not in _as_tuple(types):
        raise AnnotationError(f"{path}.{key}", f"unexpected type {type(value).__name__}")
    return value


def _as_tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _parse_object(d, path) -> AnnotatedObject:
    category = _require(d, "category", path, str)
    raw = _require(d, "box", path, list)
    if len(raw) != 4 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw):
        raise AnnotationError(f"{path}.box", "expected four numbers")
    try:
        box = BBox.checked(*raw)
    except ValueError as e:
        raise AnnotationError(f"{path}.box", str(e)) from None
    name = d.get("character_name")
    text = d.get("text_content")
    for key, value in (("character_name", name), ("text_content", text)):
        if value is not None and not isinstance(value, str):
            raise AnnotationError(f"{path}.{key}", "expected a string")
    return AnnotatedObject(box=box, category=category, character_name=name, text_content=text)


def _parse_page(d, path) -> Page:
    page_id = _require(d, "page_id", path, (str, int))
    width = _require(d, "width", path, (int, float))
    height = _require(d, "height", path, (int, float))
    irregular = d.get("irregular", False)
    if not isinstance(irregular, bool):
        raise AnnotationError(f"{path}.irregular", "expected a boolean")
    objects = _require(d, "objects", path, list) if "objects" in d else []
    return Page(
        page_id=str(page_id),
        width=width,
        height=height,
        irregular=irregular,
        objects=tuple(_parse_object(o, f"{path}.objects[{i}]") for i, o in enumerate(objects)),
    )


def parse_corpus(document) -> AnnotationCorpus:
    """Parse and validate a corpus from a JSON string/bytes or decoded dict.

    Raises:
        AnnotationError: on malformed input or any invariant violation; the
            message carries the JSON path of the offending element.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise AnnotationError(f"line {e.lineno} column {e.colno}", e.msg) from None
    volumes = _require(document, "volumes", "$", list)
    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise AnnotationError("$.schema_version", f"unsupported version {version!r}")
    parsed = []
    for vi, v in enumerate(volumes):
        path = f"volumes[{vi}]"
        title = _require(v, "title", path, str)
        genre = v.get("genre")
        if genre is not None and not isinstance(genre, str):
            raise AnnotationError(f"{path}.genre", "expected a string")
        pages = _require(v, "pages", path, list)
        parsed.append(
            Volume(
                title=title,
                genre=genre,
                pages=tuple(_parse_page(p, f"{path}.pages[{pi}]") for pi, p in enumerate(pages)),
            )
        )
    return validate_corpus(AnnotationCorpus(volumes=tuple(parsed)))


def load_corpus(path) -> AnnotationCorpus:
    with open(path, encoding="utf-8") as f:
        return parse_corpus(f.read())


def _num(v: float):
    # integral coordinates are written as ints so pixel annotations stay compact
    return int(v) if float(v).is_integer() else float(v)


def corpus_to_dict(corpus: AnnotationCorpus) -> dict:
    volumes = []
    for vol in corpus.volumes:
        pages = []
        for page in vol.pages:
            objects = []
            for obj in page.objects:
                o = {"category": obj.category, "box": [_num(v) for v in obj.box]}
                if obj.character_name is not None:
                    o["character_name"] = obj.character_name
                if obj.text_content is not None:
                    o["text_content"] = obj.text_content
                objects.append(o)
            pages.append(
                {
                    "page_id": page.page_id,
                    "width": _num(page.width),
                    "height": _num(page.height),
                    "irregular": page.irregular,
                    "objects": objects,
                }
            )
        volumes.append({"title": vol.title, "genre": vol.genre, "pages": pages})
    return {"schema_version": SCHEMA_VERSION, "volumes": volumes}


def write_corpus(corpus: AnnotationCorpus) -> str:
    """Canonical serialization: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(corpus_to_dict(corpus), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_corpus(corpus: AnnotationCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_corpus(corpus))


@dataclass(frozen=True)
class CorpusStats:
    frame: int = 0
    text: int = 0
    face: int = 0
    body: int = 0
    pages: int = 0
    volumes: int = 0
    characters: int = 0
    text_letters: int = 0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @property
    def objects(self) -> int:
        return self.frame + self.text + self.face + self.body

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def stats(corpus: AnnotationCorpus, include_irregular: bool = False) -> CorpusStats:
    """Exact counts over the included pages.

    Character names are counted as distinct ``(volume, name)`` pairs, since
    names identify characters only within a volume.
    """
    counts = dict.fromkeys(CATEGORIES, 0)
    pages = letters = 0
    names = set()
    volumes = set()
    for vol, page in corpus.iter_pages(include_irregular):
        pages += 1
        volumes.add(id(vol))
        for obj in page.objects:
            counts[obj.category] += 1
            if obj.character_name is not None:
                names.add((vol.title, obj.character_name))
            if obj.text_content is not None:
                letters += len(obj.text_content)
    return CorpusStats(
        **counts, pages=pages, volumes=len(volumes), characters=len(names), text_letters=letters
    )


def concat_double_page(left: Page, right: Page, page_id: str | None = None) -> Page:
    """Join two facing pages side by side; right-page objects shift by the left width."""
    if left.height != right.height:
        raise ValueError(f"page heights differ: {left.height} vs {right.height}")
    dx = left.width
    shifted = tuple(
        replace(o, box=BBox(o.box.x_min + dx, o.box.y_min, o.box.x_max + dx, o.box.y_max))
        for o in right.objects
    )
    return Page(
        page_id=page_id if page_id is not None else f"{left.page_id}+{right.page_id}",
        width=left.width + right.width,
        height=left.height,
        irregular=left.irregular or right.irregular,
        objects=left.objects + shifted,
    )


def split_train_test(
    corpus: AnnotationCorpus, test_volume_titles: Iterable[str]
) -> tuple[AnnotationCorpus, AnnotationCorpus]:
    test_titles = set(test_volume_titles)
    known = {v.title for v in corpus.volumes}
    unknown = test_titles - known
    if unknown:
        raise KeyError(f"test volumes not in corpus: {sorted(unknown)}")
    train = tuple(v for v in corpus.volumes if v.title not in test_titles)
    test = tuple(v for v in corpus.volumes if v.title in test_titles)
    return AnnotationCorpus(train), AnnotationCorpus(test)


def from_manga109_xml(source) -> Volume:
    """Convert one volume of the public Manga109 XML annotation layout.

    ``source`` is a path or file object. Character ids are resolved to names
    through the ``<characters>`` table. Pages are taken as-is; double-page
    joining and irregular-page flagging are left to the caller.
    """
    root = ET.parse(source).getroot()
    names = {c.get("id"): c.get("name") for c in root.iterfind("characters/character")}
    pages = []
    for p in root.iterfind("pages/page"):
        objects = []
        for el in p:
            if el.tag not in CATEGORY_INDEX:
                continue
            box = BBox.checked(*(float(el.get(k)) for k in ("xmin", "ymin", "xmax", "ymax")))
            name = names.get(el.get("character")) if el.tag in _CHARACTER_CATEGORIES else None
            text = (el.text or "") if el.tag == "text" else None
            objects.append(AnnotatedObject(box, el.tag, name, text))
        pages.append(
            Page(
                page_id=p.get("index"),
                width=float(p.get("width")),
                height=float(p.get("height")),
                objects=tuple(objects),
            )
        )
    return Volume(title=root.get("title"), pages=tuple(pages))
