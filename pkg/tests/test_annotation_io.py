import json
from pathlib import Path

import numpy as np
import pytest

from boxforge.annotation_io import (
    AnnotatedObject,
    AnnotationCorpus,
    AnnotationError,
    CorpusStats,
    Page,
    Volume,
    concat_double_page,
    from_manga109_xml,
    parse_corpus,
    split_train_test,
    stats,
    write_corpus,
)
from boxforge.geometry import BBox
from boxforge.synthetic import random_corpus

DATA = Path(__file__).parent / "data"


def _doc(**obj):
    o = {"category": "frame", "box": [0, 0, 10, 10], **obj}
    return {"schema_version": 1, "volumes": [{"title": "T", "pages": [{"page_id": "0", "width": 100, "height": 50, "objects": [o]}]}]}


def test_minimal_document():
    c = parse_corpus(json.dumps(_doc()))
    assert len(c.volumes) == 1 and len(c.volumes[0].pages) == 1
    (obj,) = c.volumes[0].pages[0].objects
    assert obj.category == "frame" and obj.box == BBox(0, 0, 10, 10)


@pytest.mark.parametrize(
    "change, match",
    [
        ({"box": [0, 0, 101, 10]}, r"objects\[0\].*outside page bounds"),
        ({"box": [5, 0, 1, 10]}, "min corner"),
        ({"box": [0, 0, 10]}, "four numbers"),
        ({"category": "balloon"}, "unknown category"),
        ({"character_name": "Taro"}, "character_name on a frame"),
        ({"category": "face", "text_content": "hi"}, "text_content on a face"),
    ],
)
def test_invalid_objects(change, match):
    with pytest.raises(AnnotationError, match=match):
        parse_corpus(_doc(**change))


def test_malformed_json_reports_location():
    with pytest.raises(AnnotationError, match="line 1 column"):
        parse_corpus('{"volumes": [')


def test_missing_field_reports_path():
    d = _doc()
    del d["volumes"][0]["pages"][0]["width"]
    with pytest.raises(AnnotationError, match=r"volumes\[0\]\.pages\[0\]: missing field 'width'"):
        parse_corpus(d)


def test_duplicate_page_ids_rejected():
    d = _doc()
    d["volumes"][0]["pages"].append(d["volumes"][0]["pages"][0])
    with pytest.raises(AnnotationError, match="duplicate page_id"):
        parse_corpus(d)


def test_empty_corpus_document():
    assert json.loads(write_corpus(AnnotationCorpus())) == {"schema_version": 1, "volumes": []}


def test_golden_single_object():
    golden = (DATA / "single_object.json").read_text(encoding="utf-8")
    corpus = parse_corpus(golden)
    assert write_corpus(corpus) == golden
    assert corpus.volumes[0].pages[0].objects[0].text_content == "「行くぞ」"


def test_roundtrip_generated_corpora():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = random_corpus(rng)
        text = write_corpus(c)
        again = parse_corpus(text)
        assert again == c
        assert write_corpus(again) == text


def test_stats_counts():
    assert stats(AnnotationCorpus()) == CorpusStats()
    objs = (
        AnnotatedObject(BBox(0, 0, 1, 1), "frame"),
        AnnotatedObject(BBox(0, 0, 1, 1), "face", character_name="A"),
        AnnotatedObject(BBox(0, 0, 1, 1), "body", character_name="A"),
        AnnotatedObject(BBox(0, 0, 1, 1), "text", text_content="はい!"),
    )
    c = AnnotationCorpus(
        (
            Volume("v1", (Page("0", 10, 10, objects=objs), Page("1", 10, 10, irregular=True, objects=objs))),
            Volume("v2", (Page("0", 10, 10, objects=objs[1:2]),)),
        )
    )
    s = stats(c)
    assert (s.frame, s.text, s.face, s.body, s.pages, s.volumes) == (1, 1, 2, 1, 2, 2)
    assert s.characters == 2  # "A" in two volumes
    assert s.text_letters == 3
    full = stats(c, include_irregular=True)
    assert full.pages == 3 and full.frame == 2


def test_stats_additive_over_volume_partitions():
    rng = np.random.default_rng(1)
    for _ in range(50):
        c = random_corpus(rng, n_volumes=int(rng.integers(1, 6)))
        titles = [v.title for v in c.volumes]
        held = [t for t in titles if rng.random() < 0.5]
        a, b = split_train_test(c, held)
        assert stats(a) + stats(b) == stats(c)
        assert stats(a, True) + stats(b, True) == stats(c, True)


def test_concat_double_page():
    obj = AnnotatedObject(BBox(10, 20, 30, 40), "face")
    left = Page("1", 827, 1170, objects=(AnnotatedObject(BBox(0, 0, 5, 5), "frame"),))
    right = Page("2", 827, 1170, objects=(obj,))
    merged = concat_double_page(left, right)
    assert (merged.width, merged.height) == (1654, 1170)
    assert merged.objects[0] == left.objects[0]
    assert merged.objects[1].box == BBox(837, 20, 857, 40)
    empty = concat_double_page(Page("a", 827, 1170), Page("b", 800, 1170))
    assert empty.width == 1627 and empty.objects == ()
    with pytest.raises(ValueError):
        concat_double_page(left, Page("3", 827, 1000))


def test_concat_preserves_category_counts():
    rng = np.random.default_rng(2)
    c = random_corpus(rng, n_volumes=1, max_pages=6)
    pages = c.volumes[0].pages
    for l, r in zip(pages[::2], pages[1::2]):
        merged = concat_double_page(l, r)
        vol = lambda *ps: AnnotationCorpus((Volume("x", ps),))  # noqa: E731
        assert stats(vol(merged), True).objects == stats(vol(l, r), True).objects
        assert stats(vol(merged), True).face == stats(vol(l, r), True).face


def test_split_109_volumes():
    c = AnnotationCorpus(tuple(Volume(f"V{i:03d}", (Page("0", 10, 10),)) for i in range(109)))
    test_titles = [f"V{i:03d}" for i in range(0, 109, 11)]
    train, test = split_train_test(c, test_titles)
    assert (len(train.volumes), len(test.volumes)) == (99, 10)
    with pytest.raises(KeyError):
        split_train_test(c, ["missing"])


def test_from_manga109_xml(tmp_path):
    xml = """<?xml version="1.0" encoding="utf-8"?>
<book title="ARMS">
  <characters><character id="c1" name="Ryo"/></characters>
  <pages>
    <page index="3" width="1654" height="1170">
      <frame id="f1" xmin="0" ymin="0" xmax="800" ymax="600"/>
      <face id="a1" xmin="10" ymin="10" xmax="90" ymax="90" character="c1"/>
      <text id="t1" xmin="100" ymin="100" xmax="140" ymax="300">行くぞ</text>
    </page>
  </pages>
</book>"""
    path = tmp_path / "ARMS.xml"
    path.write_text(xml, encoding="utf-8")
    vol = from_manga109_xml(str(path))
    assert vol.title == "ARMS"
    (page,) = vol.pages
    assert page.page_id == "3" and page.width == 1654
    assert [o.category for o in page.objects] == ["frame", "face", "text"]
    assert page.objects[1].character_name == "Ryo"
    assert page.objects[2].text_content == "行くぞ"
