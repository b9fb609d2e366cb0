"""``boxforge`` command line.

Exit status: 0 on success, 1 on usage or validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from . import anchor_grid, annotation_io, matcher, multibox_loss, postprocess, synthetic, voc_eval
from .anchor_grid import CATEGORIES


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump(obj, fh) -> None:
    fh.write(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


def _write_json(obj, path) -> None:
    if path in (None, "-"):
        _dump(obj, sys.stdout)
    else:
        with open(path, "w", encoding="utf-8") as f:
            _dump(obj, f)


def _read_json(path):
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None


def _matcher_cfg(args) -> matcher.MatcherConfig:
    return matcher.MatcherConfig(iou_threshold=args.iou_threshold, force_best_match=not args.no_force_best_match)


def _select_page(corpus, volume, page_id):
    candidates = [
        (v, p)
        for v, p in corpus.iter_pages(include_irregular=True)
        if (volume is None or v.title == volume) and (page_id is None or p.page_id == page_id)
    ]
    if len(candidates) != 1:
        raise ValueError(
            f"expected exactly one matching page, found {len(candidates)}; use --volume/--page-id"
        )
    return candidates[0]


def cmd_anchors(args) -> None:
    spec = anchor_grid.load_spec(args.spec)
    anchors = anchor_grid.generate_anchors(spec)
    print(f"K = {spec.K}")
    for i, (n, off) in enumerate(zip(spec.layer_sizes, anchors.layer_offsets)):
        print(f"  map {i + 1}: g={spec.g[i]:>2} k={spec.k[i]} anchors={n:>5} offset={off}")
    if args.dump:
        _write_json(
            {
                "spec": spec.to_dict(),
                "K": spec.K,
                "layer_offsets": list(anchors.layer_offsets),
                "anchors": anchors.anchors.tolist(),
            },
            args.dump,
        )


def cmd_params(args) -> None:
    spec = anchor_grid.load_spec(args.spec)
    counts = {head: anchor_grid.count_parameters(spec, head) for head in anchor_grid.HEADS}
    if args.format == "json":
        _dump(counts, sys.stdout)
        return
    for head, n in counts.items():
        print(f"{head:<18} {n:>11,d}  ({n / 1e6:.1f} M)")


def cmd_assign(args) -> None:
    corpus = annotation_io.load_corpus(args.annotations)
    anchors = anchor_grid.generate_anchors(anchor_grid.load_spec(args.spec))
    report = matcher.assignment_report(corpus, anchors, args.regime, _matcher_cfg(args), args.include_irregular)
    _write_json(report, args.report)
    if args.report not in (None, "-"):
        t = report["totals"]
        print(f"{args.regime}: {t['n_unassigned']} of {t['n_gt']} objects unassigned over {t['n_pages']} pages")


def cmd_loss(args) -> None:
    spec = anchor_grid.load_spec(args.spec)
    anchors = anchor_grid.generate_anchors(spec)
    pred = multibox_loss.PredictionSet.from_dict(_read_json(args.pred))
    corpus = annotation_io.load_corpus(args.annotations)
    _, page = _select_page(corpus, args.volume, args.page_id)
    gts = matcher.page_gt_objects(page)
    cfg = _matcher_cfg(args)
    if pred.mode == "fork":
        match = matcher.match_forked(gts, anchor_grid.fork_anchors(anchors, spec.C), cfg)
    else:
        match = matcher.match_standard(gts, anchors, cfg, C=spec.C)
    weights = tuple(args.weights) if args.weights else multibox_loss.CANONICAL_WEIGHTS[: spec.C]
    if len(weights) != spec.C:
        raise ValueError(f"need {spec.C} weights, got {len(weights)}")
    lcfg = multibox_loss.LossConfig(weights, args.negative_ratio, spec.variances)
    out = multibox_loss.compute_loss(pred, match, gts, anchors, lcfg).to_dict()
    out["mode"] = pred.mode
    out.pop("negatives")
    _dump(out, sys.stdout)


def cmd_detect(args) -> None:
    spec = anchor_grid.load_spec(args.spec)
    anchors = anchor_grid.generate_anchors(spec)
    doc = _read_json(args.pred)
    pred = multibox_loss.PredictionSet.from_dict(doc)
    page_id = args.page_id or doc.get("page_id")
    width = args.width or doc.get("width")
    height = args.height or doc.get("height")
    if page_id is None or width is None or height is None:
        raise ValueError("page_id, width and height are required (flags or prediction document)")
    cfg = postprocess.PostConfig(args.score_threshold, args.nms_iou, args.top_k)
    dets = postprocess.detect(pred, anchors, cfg, spec.variances)
    records = postprocess.detection_records(dets, str(page_id), float(width), float(height), args.volume or doc.get("volume"))
    if args.out in (None, "-"):
        postprocess.write_detections_jsonl(records, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as f:
            postprocess.write_detections_jsonl(records, f)


def cmd_eval(args) -> None:
    corpus = annotation_io.load_corpus(args.annotations)
    with open(args.detections, encoding="utf-8") as f:
        records = voc_eval.load_detections(f)
    cfg = voc_eval.EvalConfig(args.iou_threshold, args.interpolation)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = voc_eval.mean_ap(records, corpus, cfg, args.per_volume, args.include_irregular)
        prf = voc_eval.prf_report(records, corpus, args.iou_threshold, args.include_irregular) if args.prf else None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.format == "json":
        out = result.to_dict()
        if prf is not None:
            out["prf"] = {k: v._asdict() for k, v in prf.items()}
        _dump(out, sys.stdout)
        return
    print(voc_eval.format_table(result))
    if prf is not None:
        print()
        print(f"{'':<6}  {'R':>6}  {'P':>6}  {'F':>6}  threshold")
        for name, r in prf.items():
            print(f"{name:<6}  {r.recall:>6.3f}  {r.precision:>6.3f}  {r.f_measure:>6.3f}  {r.threshold:.4g}")


def cmd_stats(args) -> None:
    corpus = annotation_io.load_corpus(args.annotations)
    s = annotation_io.stats(corpus, args.include_irregular)
    if args.format == "json":
        _dump(s.as_dict(), sys.stdout)
        return
    print(f"{'#volume':>8} {'#page':>8} {'#frame':>8} {'#text':>8} {'#face':>8} {'#body':>8}")
    print(f"{s.volumes:>8,d} {s.pages:>8,d} {s.frame:>8,d} {s.text:>8,d} {s.face:>8,d} {s.body:>8,d}")
    print(f"characters: {s.characters:,d}  text letters: {s.text_letters:,d}")


def cmd_demo_conflict(args) -> None:
    corpus = synthetic.conflict_corpus(args.seed, args.pages)
    spec = anchor_grid.canonical_spec()
    anchors = anchor_grid.generate_anchors(spec)
    report = matcher.conflict_report(corpus, anchors, _matcher_cfg(args))
    if args.format == "json":
        _dump(report, sys.stdout)
        return
    t = report["totals"]
    print(f"{t['n_pages']} synthetic pages, {t['n_gt']} objects (frame and body share one box on every page)")
    print(f"{'category':<10} {'objects':>8} {'standard':>9} {'fork':>6}   (unassigned)")
    for name in CATEGORIES:
        print(
            f"{name:<10} {t['standard']['per_category'][name]['n_gt']:>8} "
            f"{t['standard']['per_category'][name]['n_unassigned']:>9} "
            f"{t['fork']['per_category'][name]['n_unassigned']:>6}"
        )
    print(f"{'total':<10} {t['n_gt']:>8} {t['standard']['n_unassigned']:>9} {t['fork']['n_unassigned']:>6}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boxforge", description="Anchor assignment, loss and evaluation tooling for comic object detection.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def spec_arg(sp):
        sp.add_argument("--spec", default="canonical", help="detector spec JSON path, or 'canonical'")

    def match_args(sp):
        sp.add_argument("--iou-threshold", type=float, default=0.5)
        sp.add_argument("--no-force-best-match", action="store_true")

    sp = sub.add_parser("anchors", help="generate the anchor set")
    spec_arg(sp)
    sp.add_argument("--dump", help="write anchors as JSON")
    sp.set_defaults(func=cmd_anchors)

    sp = sub.add_parser("params", help="parameter counts of baseline, fork and naive replication")
    spec_arg(sp)
    sp.add_argument("--format", choices=("table", "json"), default="table")
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("assign", help="match corpus objects to anchors and report unassigned ones")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--regime", choices=matcher.REGIMES, default="standard")
    sp.add_argument("--report", default="-")
    sp.add_argument("--include-irregular", action="store_true")
    spec_arg(sp)
    match_args(sp)
    sp.set_defaults(func=cmd_assign)

    sp = sub.add_parser("loss", help="evaluate the multibox loss on given predictions")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--volume")
    sp.add_argument("--page-id")
    sp.add_argument("--weights", type=float, nargs="+")
    sp.add_argument("--negative-ratio", type=float, default=3.0)
    spec_arg(sp)
    match_args(sp)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("detect", help="decode predictions into JSON-lines detections")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--out", default="-")
    sp.add_argument("--page-id")
    sp.add_argument("--volume")
    sp.add_argument("--width", type=float)
    sp.add_argument("--height", type=float)
    sp.add_argument("--score-threshold", type=float, default=0.01)
    sp.add_argument("--nms-iou", type=float, default=0.45)
    sp.add_argument("--top-k", type=int, default=200)
    spec_arg(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("eval", help="VOC AP/mAP of detections against a corpus")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--detections", required=True)
    sp.add_argument("--per-volume", action="store_true")
    sp.add_argument("--format", choices=("table", "json"), default="table")
    sp.add_argument("--iou-threshold", type=float, default=0.5)
    sp.add_argument("--interpolation", choices=voc_eval.INTERPOLATIONS, default="all_point")
    sp.add_argument("--prf", action="store_true", help="also report R/P/F at the best threshold")
    sp.add_argument("--include-irregular", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stats", help="corpus statistics")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--include-irregular", action="store_true")
    sp.add_argument("--format", choices=("table", "json"), default="table")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("demo-conflict", help="standard vs forked assignment on overlapped synthetic pages")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pages", type=int, default=8)
    sp.add_argument("--format", choices=("table", "json"), default="table")
    match_args(sp)
    sp.set_defaults(func=cmd_demo_conflict)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except OSError as e:
        print(f"boxforge: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as e:
        print(f"boxforge: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
