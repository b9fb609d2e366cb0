"""
Working with an annotation corpus
=================================

Assemble a small corpus, join facing pages into one double-sided page,
count objects, split off a test volume, and write the canonical JSON.
"""

import numpy as np

from boxforge import (
    AnnotatedObject,
    AnnotationCorpus,
    BBox,
    Page,
    Volume,
    concat_double_page,
    parse_corpus,
    split_train_test,
    stats,
    write_corpus,
)
from boxforge.synthetic import random_corpus

left = Page(
    "004",
    827,
    1170,
    objects=(
        AnnotatedObject(BBox(20, 30, 800, 560), "frame"),
        AnnotatedObject(BBox(600, 60, 700, 300), "text", text_content="どうした?"),
    ),
)
right = Page(
    "005",
    827,
    1170,
    objects=(
        AnnotatedObject(BBox(0, 30, 810, 560), "frame"),
        AnnotatedObject(BBox(40, 100, 200, 260), "face", character_name="Ryo"),
        AnnotatedObject(BBox(10, 90, 400, 560), "body", character_name="Ryo"),
    ),
)
spread = concat_double_page(left, right)
print(f"double-sided page {spread.page_id}: {spread.width:g} x {spread.height:g}")
print("right-page face moved to", list(spread.objects[3].box))

cover = Page("000", 1654, 1170, irregular=True)
corpus = AnnotationCorpus((Volume("DemoVolume", (cover, spread), genre="drama"),))

s = stats(corpus)
print(f"regular pages: {s.pages}, frames {s.frame}, texts {s.text}, faces {s.face}, bodies {s.body}")
print(f"with irregular pages: {stats(corpus, include_irregular=True).pages} pages")

# Train/test split by volume on a larger generated corpus.
big = random_corpus(np.random.default_rng(0), n_volumes=12)
train, test = split_train_test(big, [v.title for v in big.volumes[-2:]])
print(f"train volumes {len(train.volumes)}, test volumes {len(test.volumes)}")
assert stats(train) + stats(test) == stats(big)

text = write_corpus(corpus)
assert parse_corpus(text) == corpus
print(text[:200] + "...")
