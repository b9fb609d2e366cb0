"""Anchor assignment, forked multibox loss and VOC evaluation for comic object detection."""

from .anchor_grid import (
    CATEGORIES,
    AnchorSet,
    DetectorSpec,
    ForkedAnchorSet,
    canonical_spec,
    count_parameters,
    fork_anchors,
    generate_anchors,
)
from .annotation_io import (
    AnnotatedObject,
    AnnotationCorpus,
    AnnotationError,
    CorpusStats,
    Page,
    Volume,
    concat_double_page,
    parse_corpus,
    split_train_test,
    stats,
    write_corpus,
)
from .geometry import BBox, EncodedOffsets, area, decode, encode, iou
from .matcher import GtObject, MatchResult, MatcherConfig, conflict_report, match_forked, match_standard
from .multibox_loss import LossBreakdown, LossConfig, PredictionSet, loss_baseline, loss_fork, loss_gradient
from .postprocess import Detection, PostConfig, detect, nms
from .voc_eval import EvalConfig, EvalResult, average_precision, mean_ap, prf_at_best_threshold

__version__ = "0.1.0"
