import io
import math

import numpy as np
import pytest

from boxforge.annotation_io import AnnotatedObject, AnnotationCorpus, Page, Volume
from boxforge.geometry import BBox
from boxforge.voc_eval import (
    EvalConfig,
    ScoredBox,
    average_precision,
    format_table,
    load_detections,
    mean_ap,
    prf_at_best_threshold,
    prf_report,
)

from instances import random_boxes
from oracles import ref_ap, ref_prf

GT = {"p": np.array([[0, 0, 10, 10]])}


def test_perfect_single_detection():
    dets = [ScoredBox("p", 1.0, (0, 0, 10, 10))]
    assert average_precision(dets, GT) == 1.0
    assert prf_at_best_threshold(dets, GT)[:3] == (1.0, 1.0, 1.0)


def test_low_iou_detection_scores_zero():
    # IoU = 0.3
    dets = [ScoredBox("p", 1.0, (0, 0, 10, 3))]
    assert average_precision(dets, GT) == 0.0


def test_no_ground_truth_is_absent():
    assert average_precision([ScoredBox("p", 1.0, (0, 0, 1, 1))], {"p": np.zeros((0, 4))}) is None


def test_hand_fixture():
    gts = {"a": np.array([[0, 0, 10, 10]]), "b": np.array([[5, 5, 15, 15]])}
    dets = [
        ScoredBox("a", 0.9, (0, 0, 10, 10)),  # TP
        ScoredBox("b", 0.8, (20, 20, 30, 30)),  # FP
        ScoredBox("b", 0.7, (5, 5, 15, 14)),  # TP, IoU 0.9
    ]
    # recall .5 .5 1, precision 1 .5 2/3
    assert average_precision(dets, gts) == pytest.approx(0.5 + 0.5 * 2 / 3)
    assert average_precision(dets, gts, EvalConfig(interpolation="eleven_point")) == pytest.approx((6 + 5 * 2 / 3) / 11)


def test_each_gt_matches_once():
    dets = [ScoredBox("p", 0.9, (0, 0, 10, 10)), ScoredBox("p", 0.8, (0, 0, 10, 10))]
    # recall 1 reached at the first detection; the duplicate is a false positive
    assert average_precision(dets, GT) == 1.0
    r = prf_at_best_threshold(dets, GT)
    assert (r.recall, r.precision, r.threshold) == (1.0, 1.0, 0.9)


def test_best_threshold_example():
    dets = [ScoredBox("p", 0.9, (0, 0, 10, 10)), ScoredBox("p", 0.5, (50, 50, 60, 60))]
    r = prf_at_best_threshold(dets, GT)
    assert r.f_measure == 1.0
    assert 0.5 < r.threshold <= 0.9


def test_no_detections_prf():
    assert prf_at_best_threshold([], GT) == (0.0, 0.0, 0.0, math.inf)


def _random_instance(rng, n_pages=3):
    gts = {p: random_boxes(rng, int(rng.integers(0, 5))) for p in range(n_pages)}
    dets = []
    for _ in range(int(rng.integers(0, 31))):
        p = int(rng.integers(n_pages))
        if len(gts[p]) and rng.random() < 0.6:
            box = gts[p][rng.integers(len(gts[p]))] + rng.normal(0, 0.03, 4)
            box = (min(box[0], box[2]), min(box[1], box[3]), max(box[0], box[2]), max(box[1], box[3]))
        else:
            box = tuple(random_boxes(rng, 1)[0])
        score = float(rng.choice([0.2, 0.5, 0.8])) if rng.random() < 0.3 else float(rng.random())
        dets.append(ScoredBox(p, score, tuple(map(float, box))))
    return dets, gts


@pytest.mark.parametrize("interp", ["all_point", "eleven_point"])
def test_ap_against_curve_oracle(interp):
    rng = np.random.default_rng(4)
    for _ in range(150):
        dets, gts = _random_instance(rng)
        got = average_precision(dets, gts, EvalConfig(interpolation=interp))
        want = ref_ap(list(dets), {p: [tuple(b) for b in g] for p, g in gts.items()}, 0.5, interp)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-10)


def test_prf_against_sweep_oracle():
    rng = np.random.default_rng(5)
    for _ in range(150):
        dets, gts = _random_instance(rng)
        got = prf_at_best_threshold(dets, gts)
        want = ref_prf(list(dets), {p: [tuple(b) for b in g] for p, g in gts.items()}, 0.5)
        assert tuple(got) == tuple(want)


def test_low_score_false_positive_never_raises_ap():
    rng = np.random.default_rng(6)
    for _ in range(100):
        dets, gts = _random_instance(rng)
        if not sum(len(g) for g in gts.values()):
            continue
        before = average_precision(dets, gts)
        fp = ScoredBox(0, -1.0, (5.0, 5.0, 6.0, 6.0))
        assert average_precision(dets + [fp], gts) <= before + 1e-15


def test_eleven_point_close_to_all_point():
    rng = np.random.default_rng(7)
    for _ in range(100):
        dets, gts = _random_instance(rng)
        a = average_precision(dets, gts)
        b = average_precision(dets, gts, EvalConfig(interpolation="eleven_point"))
        if a is not None:
            assert abs(a - b) <= 0.1


def _corpus():
    objs_a = (
        AnnotatedObject(BBox(0, 0, 100, 100), "frame"),
        AnnotatedObject(BBox(10, 10, 40, 40), "face"),
        AnnotatedObject(BBox(50, 50, 90, 90), "body"),
        AnnotatedObject(BBox(60, 5, 80, 30), "text"),
    )
    objs_b = (AnnotatedObject(BBox(0, 0, 50, 50), "frame"),)
    return AnnotationCorpus(
        (
            Volume("A", (Page("0", 200, 200, objects=objs_a),)),
            Volume("B", (Page("0", 200, 200, objects=objs_b), Page("1", 200, 200, irregular=True))),
        )
    )


def _perfect(corpus):
    return [
        {"volume": v.title, "page_id": p.page_id, "category": o.category, "score": 1.0, "box": list(o.box)}
        for v, p in corpus.iter_pages()
        for o in p.objects
    ]


def test_perfect_detections_map_one():
    corpus = _corpus()
    with pytest.warns(UserWarning, match="B: no ground truth"):
        r = mean_ap(_perfect(corpus), corpus, per_volume=True)
    assert r.ap == (1.0, 1.0, 1.0, 1.0)
    assert r.mAP == 1.0
    assert r.per_volume["A"].mAP == 1.0


def test_empty_detections_zero_and_absent_categories_warn():
    corpus = _corpus()
    with pytest.warns(UserWarning, match="no ground truth"):
        r = mean_ap([], corpus, per_volume=True)
    assert r.ap == (0.0, 0.0, 0.0, 0.0)
    assert r.per_volume["B"].ap[1:] == (None, None, None)
    assert r.per_volume["B"].mAP == 0.0


def test_ambiguous_page_id_needs_volume():
    corpus = _corpus()
    with pytest.raises(ValueError, match="ambiguous"):
        mean_ap([{"page_id": "0", "category": "frame", "score": 1, "box": [0, 0, 1, 1]}], corpus)
    with pytest.raises(ValueError, match="unknown page"):
        mean_ap([{"page_id": "9", "category": "frame", "score": 1, "box": [0, 0, 1, 1]}], corpus)


def test_table_column_order():
    corpus = _corpus()
    table = format_table(mean_ap(_perfect(corpus), corpus))
    header = table.splitlines()[0].split()
    assert header == ["mAP", "frame", "text", "face", "body"]
    assert table.splitlines()[1].split() == ["all"] + ["1.000"] * 5


def test_prf_report_per_category():
    corpus = _corpus()
    rep = prf_report(_perfect(corpus), corpus)
    assert set(rep) == {"frame", "text", "face", "body"}
    assert all(r[:3] == (1.0, 1.0, 1.0) for r in rep.values())


def test_load_detections_reports_line():
    with pytest.raises(ValueError, match="line 2"):
        load_detections(io.StringIO('{"page_id": 1, "category": "face", "score": 1, "box": [0,0,1,1]}\n{oops\n'))
