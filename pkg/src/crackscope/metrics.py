"""Detection evaluation: confusion-count metrics, instance matching,
precision-recall curves and average precision.

Matching is greedy by descending score (ties keep input order): each
prediction claims the unmatched ground truth of highest IoU at or above the
threshold, and every ground truth is claimed at most once.  Average
precision integrates the all-points interpolated precision envelope
``p(r) = max over r' >= r of p(r')`` over recall, so only the order of
scores matters, never their values.

Accuracy needs true negatives, which do not exist for instance detection;
it is therefore only computed from pixel-level confusion counts
(:func:`pixel_confusion`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidShape, MalformedPrediction, OutOfRange, UndefinedMetric

__all__ = [
    "ConfusionCounts",
    "DetectionRecord",
    "PRPoint",
    "recall",
    "precision",
    "accuracy",
    "mask_iou",
    "pixel_confusion",
    "match_instances",
    "pr_curve",
    "average_precision",
    "pr_curve_to_csv",
]


@dataclass(frozen=True)
class ConfusionCounts:
    """tp/fp/fn/tn tallies; tn is only meaningful for pixel-level counting."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"confusion counts must be nonnegative: {self}")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """One scored prediction: image id, class, confidence and geometry
    (a normalized polygon, a center-format box, or both)."""

    image_id: str
    class_id: int
    score: float
    polygon: np.ndarray | None = None  # [k >= 3, 2] normalized vertices
    box: object | None = None  # BBox

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise OutOfRange(f"score must be in [0, 1], got {self.score}")
        if self.polygon is not None:
            poly = np.asarray(self.polygon, dtype=np.float64)
            if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
                raise MalformedPrediction(f"polygon needs >= 3 (x, y) vertices, got {poly.shape}")
            object.__setattr__(self, "polygon", poly)
        if self.polygon is None and self.box is None:
            raise MalformedPrediction("prediction has neither polygon nor box geometry")


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def recall(c: ConfusionCounts) -> float:
    """tp / (tp + fn)."""
    if c.tp + c.fn == 0:
        raise UndefinedMetric("recall undefined: no positives (tp + fn = 0)")
    return c.tp / (c.tp + c.fn)


def precision(c: ConfusionCounts) -> float:
    """tp / (tp + fp)."""
    if c.tp + c.fp == 0:
        raise UndefinedMetric("precision undefined: no predictions (tp + fp = 0)")
    return c.tp / (c.tp + c.fp)


def accuracy(c: ConfusionCounts) -> float:
    """(tp + tn) / (tp + tn + fp + fn)."""
    total = c.tp + c.tn + c.fp + c.fn
    if total == 0:
        raise UndefinedMetric("accuracy undefined: empty confusion counts")
    return (c.tp + c.tn) / total


def mask_iou(a, b) -> float:
    """Pixel IoU of two equal-extent binary masks; 1.0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise InvalidShape(f"mask extents differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def pixel_confusion(pred, gt) -> ConfusionCounts:
    """Per-pixel confusion counts of a predicted mask against ground truth."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise InvalidShape(f"mask extents differ: {pred.shape} vs {gt.shape}")
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    tn = int(np.sum(~pred & ~gt))
    return ConfusionCounts(tp, fp, fn, tn)


# ---------------------------------------------------------------------------
# instance matching


def _poly_box_corners(polygon: np.ndarray) -> tuple[float, float, float, float]:
    xs, ys = polygon[:, 0], polygon[:, 1]
    return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())


def _record_corners(record) -> tuple[float, float, float, float]:
    if getattr(record, "box", None) is not None:
        return record.box.corners
    return _poly_box_corners(np.asarray(record.polygon, dtype=np.float64))


def _corner_iou(a, b) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def _pair_iou(pred, gt, mode: str, extent) -> float:
    if mode == "box":
        return _corner_iou(_record_corners(pred), _record_corners(gt))
    if mode == "mask":
        from .dataio import polygon_to_mask  # deferred: dataio builds records from this module

        width, height = extent
        return mask_iou(
            polygon_to_mask(pred.polygon, width, height),
            polygon_to_mask(gt.polygon, width, height),
        )
    raise ValueError(f"unknown matching mode {mode!r}")


def match_instances(
    preds, gts, iou_thresh: float = 0.5, mode: str = "box", extent: tuple[int, int] = (256, 256)
):
    """Greedy single-match assignment for one image.

    Returns ``(flags, fn)`` where ``flags[i]`` says whether ``preds[i]`` is a
    true positive and ``fn`` counts unmatched ground truths.  Predictions are
    visited in descending score order (ties by input order); only same-class
    ground truths are eligible; ``extent`` is the (width, height) raster used
    for mask-mode IoU.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise OutOfRange(f"iou threshold must be in (0, 1], got {iou_thresh}")
    order = sorted(range(len(preds)), key=lambda i: -preds[i].score)
    taken = [False] * len(gts)
    flags = [False] * len(preds)
    for i in order:
        pred = preds[i]
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if taken[j] or getattr(gt, "class_id", pred.class_id) != pred.class_id:
                continue
            candidate = _pair_iou(pred, gt, mode, extent)
            if candidate > best_iou:
                best_iou, best_j = candidate, j
        if best_j >= 0 and best_iou >= iou_thresh:
            taken[best_j] = True
            flags[i] = True
    return flags, taken.count(False)


# ---------------------------------------------------------------------------
# PR curve and average precision


def pr_curve(flagged, total_gt: int) -> list[PRPoint]:
    """Precision/recall while sweeping the score threshold over every
    distinct score, highest first.

    ``flagged`` is the dataset-wide list of ``(score, is_tp)`` pairs.  With
    no predictions at all the curve is a single point with recall 0 and
    precision NaN (undefined, flagged as such).
    """
    if total_gt < 1:
        raise UndefinedMetric("pr curve undefined without ground truths")
    if not flagged:
        return [PRPoint(threshold=1.0, precision=math.nan, recall=0.0)]
    ordered = sorted(flagged, key=lambda pair: -pair[0])
    points = []
    tp = fp = 0
    for idx, (score, is_tp) in enumerate(ordered):
        if is_tp:
            tp += 1
        else:
            fp += 1
        last_of_threshold = idx + 1 == len(ordered) or ordered[idx + 1][0] != score
        if last_of_threshold:
            points.append(PRPoint(float(score), tp / (tp + fp), tp / total_gt))
    return points


def average_precision(points) -> float:
    """Area under the interpolated precision envelope over recall."""
    points = list(points)
    if not points:
        raise UndefinedMetric("average precision undefined for an empty curve")
    area = 0.0
    prev_recall = 0.0
    for i, point in enumerate(points):
        if point.recall > prev_recall:
            envelope = max(
                p.precision for p in points[i:] if not math.isnan(p.precision)
            )
            area += (point.recall - prev_recall) * envelope
            prev_recall = point.recall
    return area


def pr_curve_to_csv(points) -> str:
    """CSV export: header plus one ``threshold,precision,recall`` row per
    distinct threshold, six decimal places."""
    lines = ["threshold,precision,recall"]
    for p in points:
        lines.append(f"{p.threshold:.6f},{p.precision:.6f},{p.recall:.6f}")
    return "\n".join(lines) + "\n"
