"""Obstacle-segmentation evaluation: pixel PR/AP/FPR95 and segment metrics.

Pixel level: a precision-recall curve over every distinct score value,
step-summed average precision, and the false-positive rate at the first
operating point reaching 95% recall. Pixels labeled 255 in the ground
truth are ignored everywhere.

Segment level: ground-truth and predicted 8-connected components are
matched at each binarization threshold in a fixed grid. A ground-truth
segment g scores sIoU = |g cap P| / |g cup P'| against the union P of
predicted pixels, where P' is P restricted to non-ignore pixels and
adjusted to exclude pixels lying on other ground-truth segments (so a
prediction that also covers a second object is not punished on g). A
segment counts as found when sIoU >= 0.5; a predicted segment's PPV is
its fraction of pixels on ground truth and it counts as a false positive
below 0.5. F1 = 2TP / (2TP + FN + FP).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .tensor_io import MASK_IGNORE, MASK_OBJECT

TAU_MATCH = 0.5
DEFAULT_THRESHOLDS = tuple(round(0.25 + 0.05 * k, 2) for k in range(11))

_EIGHT_CONN = np.ones((3, 3), dtype=np.int32)


@dataclass
class PRCurve:
    """One point per distinct score value, thresholds descending."""

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    fprs: np.ndarray

    def __post_init__(self):
        n = len(self.thresholds)
        if not (len(self.precisions) == len(self.recalls) == len(self.fprs) == n):
            raise ValueError("curve arrays differ in length")
        if n == 0:
            raise ValueError("empty curve")


@dataclass
class SegmentSet:
    """8-connected components; labels 0 = none, ids 1..count in raster order."""

    labels: np.ndarray
    count: int


def _flat_valid(scores: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    g = np.asarray(gt)
    if s.shape != g.shape:
        raise ValueError(f"scores {s.shape} vs gt {g.shape}")
    valid = g != MASK_IGNORE
    return s[valid], (g[valid] == MASK_OBJECT)


def _curve_from_flat(s: np.ndarray, positive: np.ndarray) -> PRCurve:
    if not positive.any():
        raise ValueError("ground truth has no positive pixels")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    tp_cum = np.cumsum(positive[order])
    # last index of each run of equal scores = counts at threshold s_sorted[i]
    last = np.flatnonzero(np.diff(s_sorted) != 0)
    last = np.concatenate([last, [s.size - 1]])
    tp = tp_cum[last].astype(np.float64)
    predicted = (last + 1).astype(np.float64)
    fp = predicted - tp
    p = float(positive.sum())
    n = float(s.size - p)
    return PRCurve(
        thresholds=s_sorted[last],
        precisions=tp / predicted,
        recalls=tp / p,
        fprs=fp / n if n > 0 else np.zeros_like(fp),
    )


def pr_curve(scores: np.ndarray, gt: np.ndarray) -> PRCurve:
    """PR curve over all distinct scores; 255-labeled pixels excluded."""
    return _curve_from_flat(*_flat_valid(scores, gt))


def average_precision(curve: PRCurve) -> float:
    """Step-wise AP: sum of (recall step) x precision, thresholds descending."""
    r = np.concatenate([[0.0], curve.recalls])
    return float(np.sum(np.diff(r) * curve.precisions))


def fpr_at_tpr(curve: PRCurve, target: float = 0.95) -> float:
    """Minimum FPR among curve points with recall >= target."""
    ok = curve.recalls >= target
    if not ok.any():
        raise ValueError(f"no operating point reaches recall {target}")
    return float(curve.fprs[ok].min())


def connected_components(mask: np.ndarray) -> SegmentSet:
    """Maximal 8-connected components of 1-pixels, ids in raster order."""
    binary = np.asarray(mask) == 1
    labels, count = ndimage.label(binary, structure=_EIGHT_CONN)
    if count > 1:
        flat = labels.ravel()
        first = np.full(count + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat, np.arange(flat.size))
        order = np.argsort(first[1:], kind="stable")
        remap = np.zeros(count + 1, dtype=labels.dtype)
        remap[1:][order] = np.arange(1, count + 1)
        labels = remap[flat].reshape(labels.shape)
    return SegmentSet(labels=labels, count=int(count))


@dataclass
class ThresholdMetrics:
    """Segment-level outcome at one binarization threshold."""

    threshold: float
    sious: list[float] = field(default_factory=list)
    ppvs: list[float] = field(default_factory=list)
    tp: int = 0
    fn: int = 0
    fp: int = 0

    @property
    def siou_mean(self) -> float | None:
        return float(np.mean(self.sious)) if self.sious else None

    @property
    def ppv_mean(self) -> float | None:
        return float(np.mean(self.ppvs)) if self.ppvs else None

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fn + self.fp
        return 2 * self.tp / denom if denom else 1.0

    def merge(self, other: "ThresholdMetrics") -> None:
        self.sious.extend(other.sious)
        self.ppvs.extend(other.ppvs)
        self.tp += other.tp
        self.fn += other.fn
        self.fp += other.fp

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "siou_mean": self.siou_mean,
            "ppv_mean": self.ppv_mean,
            "tp": self.tp,
            "fn": self.fn,
            "fp": self.fp,
            "f1": self.f1,
        }


def segment_metrics(
    scores: np.ndarray,
    gt_instances: SegmentSet,
    gt_mask: np.ndarray,
    thresholds: list[float],
) -> list[ThresholdMetrics]:
    """Per-threshold segment matching of scores against labeled instances.

    Predicted pixels under ignore labels are discarded before component
    extraction, so ignore regions can neither create nor join segments.
    """
    if not len(thresholds):
        raise ValueError("need at least one threshold")
    s = np.asarray(scores, dtype=np.float64)
    g = np.asarray(gt_mask)
    if s.shape != g.shape or s.shape != gt_instances.labels.shape:
        raise ValueError("scores, gt mask and instances must share one shape")
    keep = g != MASK_IGNORE
    gt_union = g == MASK_OBJECT
    gl = gt_instances.labels
    gt_sizes = np.bincount(gl.ravel(), minlength=gt_instances.count + 1)[1:]
    out = []
    for t in thresholds:
        pred = (s >= t) & keep
        pred_set = connected_components(pred.astype(np.uint8))
        pred_pixels = int(pred.sum())
        tm = ThresholdMetrics(threshold=float(t))
        if gt_instances.count:
            inter = np.bincount(
                gl[pred], minlength=gt_instances.count + 1
            )[1:].astype(np.float64)
            # adjusted union: predicted pixels on other gt segments do not
            # count against g, so |g u P'| = |g| + |P| - |P n gt_union|
            pred_on_gt = float(np.sum(pred & gt_union))
            union = gt_sizes + pred_pixels - pred_on_gt
            sious = inter / union
            tm.sious = [float(v) for v in sious]
            tm.tp = int(np.sum(sious >= TAU_MATCH))
            tm.fn = gt_instances.count - tm.tp
        if pred_set.count:
            pl = pred_set.labels
            sizes = np.bincount(pl.ravel(), minlength=pred_set.count + 1)[1:]
            on_gt = np.bincount(
                pl[gt_union], minlength=pred_set.count + 1
            )[1:].astype(np.float64)
            ppvs = on_gt / sizes
            tm.ppvs = [float(v) for v in ppvs]
            tm.fp = int(np.sum(ppvs < TAU_MATCH))
        out.append(tm)
    return out


@dataclass
class MetricsReport:
    """Pooled pixel metrics plus threshold-averaged segment metrics."""

    ap: float
    fpr95: float
    siou_bar: float | None
    ppv_bar: float | None
    f1_bar: float
    per_threshold: list[ThresholdMetrics]
    frames: int

    def to_json(self) -> dict:
        return {
            "ap": self.ap,
            "fpr95": self.fpr95,
            "siou_bar": self.siou_bar,
            "ppv_bar": self.ppv_bar,
            "f1_bar": self.f1_bar,
            "per_threshold": [tm.to_json() for tm in self.per_threshold],
            "frames": self.frames,
        }


def _bar(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def evaluate(
    frames: list[tuple[np.ndarray, np.ndarray]],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
    tpr_target: float = 0.95,
) -> MetricsReport:
    """Full protocol over (scores, gt_mask) frames.

    Pixel metrics pool every valid pixel across frames into one curve;
    segment metrics pool segments across frames at each threshold, then
    average over the threshold grid.
    """
    if not frames:
        raise ValueError("need at least one frame")
    flat_s, flat_p = [], []
    pooled = [ThresholdMetrics(threshold=float(t)) for t in thresholds]
    for scores, gt in frames:
        s, positive = _flat_valid(scores, gt)
        flat_s.append(s)
        flat_p.append(positive)
        instances = connected_components(np.asarray(gt) == MASK_OBJECT)
        for tm, frame_tm in zip(
            pooled, segment_metrics(scores, instances, gt, list(thresholds))
        ):
            tm.merge(frame_tm)
    curve = _curve_from_flat(np.concatenate(flat_s), np.concatenate(flat_p))
    return MetricsReport(
        ap=average_precision(curve),
        fpr95=fpr_at_tpr(curve, tpr_target),
        siou_bar=_bar([tm.siou_mean for tm in pooled]),
        ppv_bar=_bar([tm.ppv_mean for tm in pooled]),
        f1_bar=float(np.mean([tm.f1 for tm in pooled])),
        per_threshold=pooled,
        frames=len(frames),
    )
