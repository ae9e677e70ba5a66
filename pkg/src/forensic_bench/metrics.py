"""Image- and pixel-level detection/localization metrics.

Everything is derived from two sufficient statistics:

* :class:`BinaryCounts` -- integer confusion counts at a fixed threshold,
  for ACC, F1, IoU, MCC, TNR, TPR, Precision and Recall;
* :class:`RankStats` -- per distinct score value, how many positives and
  negatives carry it; AUC (Mann-Whitney) and AP (step-wise PR area) are exact
  functions of it.

Both are merged by integer addition, so parallel evaluation reduces to the
same numbers regardless of how work was split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NoPositives, SingleClass

THRESHOLD_METRICS = ("ACC", "F1", "IoU", "MCC", "TNR", "TPR", "Precision", "Recall")
RANK_METRICS = ("AUC", "AP")
METRIC_NAMES = THRESHOLD_METRICS + RANK_METRICS
DEFAULT_THRESHOLD = 0.5

MetricSet = dict  # metric name -> float, keys in METRIC_NAMES order


class ScoredLabel(NamedTuple):
    score: float
    label: int


@dataclass(frozen=True)
class BinaryCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "BinaryCounts") -> "BinaryCounts":
        return BinaryCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def merge_counts(a: BinaryCounts, b: BinaryCounts) -> BinaryCounts:
    return a + b


def split_items(items: Iterable[ScoredLabel]) -> tuple[np.ndarray, np.ndarray]:
    items = list(items)
    scores = np.array([it[0] for it in items], dtype=np.float64)
    labels = np.array([it[1] for it in items], dtype=np.int64)
    return scores, labels


def _as_labels(labels) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.dtype != bool:
        if lab.size and not np.isin(lab, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        lab = lab.astype(bool)
    return lab.ravel()


def to_probability(pred) -> np.ndarray:
    """Float64 P(fake) map; 8/16-bit integer maps are scaled by 255/65535."""
    pred = np.asarray(pred)
    if pred.dtype == np.uint8:
        return pred / 255.0
    if pred.dtype == np.uint16:
        return pred / 65535.0
    if pred.dtype == bool:
        return pred.astype(np.float64)
    out = pred.astype(np.float64, copy=False)
    if out.size and (np.isnan(out).any() or out.min() < 0.0 or out.max() > 1.0):
        raise ValueError("probability map values must lie in [0, 1]")
    return out


def confusion_from_scores(scores, labels, threshold: float = DEFAULT_THRESHOLD) -> BinaryCounts:
    """Tally predictions ``score >= threshold`` against labels."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = _as_labels(labels)
    if scores.size == 0:
        raise EmptyInput("no items to count")
    if scores.shape != labels.shape:
        raise DimensionMismatch(f"{scores.size} scores vs {labels.size} labels")
    return _tally(scores >= threshold, labels)


def _tally(pred_pos: np.ndarray, labels: np.ndarray) -> BinaryCounts:
    n = int(labels.size)
    n_pos = int(np.count_nonzero(labels))
    n_pred = int(np.count_nonzero(pred_pos))
    tp = int(np.count_nonzero(pred_pos & labels))
    fp = n_pred - tp
    fn = n_pos - tp
    return BinaryCounts(tp, fp, n - tp - fp - fn, fn)


def _threshold_mask(pred: np.ndarray, threshold: float) -> np.ndarray:
    if pred.dtype in (np.uint8, np.uint16):
        top = 255 if pred.dtype == np.uint8 else 65535
        table = (np.arange(top + 1) / float(top)) >= threshold
        return table[pred]
    return to_probability(pred) >= threshold


def confusion_from_masks(pred, gt, threshold: float = DEFAULT_THRESHOLD) -> BinaryCounts:
    """Per-pixel tally of a probability map against a binary ground truth."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if pred.size == 0:
        raise EmptyInput("empty mask")
    return _tally(_threshold_mask(pred, threshold).ravel(), gt.astype(bool).ravel())


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def threshold_metrics(c: BinaryCounts) -> MetricSet:
    """Thresholded metrics; a zero denominator yields 0.0."""
    if c.total < 1:
        raise EmptyInput("counts are all zero")
    tp, fp, tn, fn = c.tp, c.fp, c.tn, c.fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den:
        mcc = (tp * tn - fp * fn) / math.sqrt(den)
        mcc = min(1.0, max(-1.0, mcc))
    else:
        mcc = 0.0
    return {
        "ACC": (tp + tn) / c.total,
        "F1": _ratio(2 * tp, 2 * tp + fp + fn),
        "IoU": _ratio(tp, tp + fp + fn),
        "MCC": mcc,
        "TNR": _ratio(tn, tn + fp),
        "TPR": recall,
        "Precision": precision,
        "Recall": recall,
    }


@dataclass(frozen=True, eq=False)
class RankStats:
    """Ascending distinct scores with the number of positives/negatives at each."""

    values: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def from_scores(cls, scores, labels) -> "RankStats":
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = _as_labels(labels)
        if scores.shape != labels.shape:
            raise DimensionMismatch(f"{scores.size} scores vs {labels.size} labels")
        if np.isnan(scores).any():
            raise ValueError("scores contain NaN")
        values, inv = np.unique(scores, return_inverse=True)
        inv = inv.ravel()
        pos = np.bincount(inv[labels], minlength=values.size).astype(np.int64)
        neg = np.bincount(inv[~labels], minlength=values.size).astype(np.int64)
        return cls(values, pos, neg)

    @classmethod
    def from_levels(cls, levels: np.ndarray, labels) -> "RankStats":
        """Exact fast path for uint8/uint16 quantized probability maps."""
        levels = np.asarray(levels)
        top = 255 if levels.dtype == np.uint8 else 65535
        if levels.dtype not in (np.uint8, np.uint16):
            raise TypeError("from_levels needs a uint8 or uint16 array")
        labels = _as_labels(labels)
        flat = levels.ravel().astype(np.int64)
        if flat.shape != labels.shape:
            raise DimensionMismatch(f"{flat.size} levels vs {labels.size} labels")
        bins = np.bincount(flat + (top + 1) * labels, minlength=2 * (top + 1))
        neg, pos = bins[: top + 1], bins[top + 1:]
        keep = (neg + pos) > 0
        values = np.arange(top + 1)[keep] / float(top)
        return cls(values, pos[keep].astype(np.int64), neg[keep].astype(np.int64))

    @classmethod
    def for_map(cls, pred, gt) -> "RankStats":
        pred = np.asarray(pred)
        if pred.dtype in (np.uint8, np.uint16):
            return cls.from_levels(pred, np.asarray(gt, dtype=bool))
        return cls.from_scores(to_probability(pred), np.asarray(gt, dtype=bool))

    @property
    def n_pos(self) -> int:
        return int(self.pos.sum())

    @property
    def n_neg(self) -> int:
        return int(self.neg.sum())

    def merge(self, other: "RankStats") -> "RankStats":
        values, inv = np.unique(np.concatenate([self.values, other.values]), return_inverse=True)
        inv = inv.ravel()
        pos = np.zeros(values.size, dtype=np.int64)
        neg = np.zeros(values.size, dtype=np.int64)
        np.add.at(pos, inv, np.concatenate([self.pos, other.pos]))
        np.add.at(neg, inv, np.concatenate([self.neg, other.neg]))
        return RankStats(values, pos, neg)

    def counts_at(self, threshold: float = DEFAULT_THRESHOLD) -> BinaryCounts:
        above = self.values >= threshold
        tp, fp = int(self.pos[above].sum()), int(self.neg[above].sum())
        return BinaryCounts(tp, fp, self.n_neg - fp, self.n_pos - tp)

    def __eq__(self, other) -> bool:
        return (isinstance(other, RankStats) and np.array_equal(self.values, other.values)
                and np.array_equal(self.pos, other.pos) and np.array_equal(self.neg, other.neg))


def empty_stats() -> RankStats:
    return RankStats(np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


def auc_from_stats(stats: RankStats) -> float:
    n_pos, n_neg = stats.n_pos, stats.n_neg
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both positive and negative items")
    neg_below = np.cumsum(stats.neg) - stats.neg
    # twice the Mann-Whitney U, exact in integers: ties count one half
    if 2 * n_pos * n_neg < 2**62:
        twice_u = int(np.dot(stats.pos, 2 * neg_below + stats.neg))
    else:
        twice_u = sum(int(p) * (2 * int(b) + int(n)) for p, b, n in zip(stats.pos, neg_below, stats.neg))
    return twice_u / (2 * n_pos * n_neg)


def ap_from_stats(stats: RankStats) -> float:
    n_pos = stats.n_pos
    if n_pos == 0:
        raise NoPositives("AP needs at least one positive item")
    pos, neg = stats.pos[::-1], stats.neg[::-1]
    tp = np.cumsum(pos)
    fp = np.cumsum(neg)
    hit = pos > 0
    precision = tp[hit] / (tp[hit] + fp[hit])
    return float(np.sum(pos[hit] / n_pos * precision))


def auc(scores, labels) -> float:
    """ROC area as P(pos > neg) + P(tie)/2 over all positive/negative pairs."""
    return auc_from_stats(RankStats.from_scores(scores, labels))


def average_precision(scores, labels) -> float:
    """PR area with step interpolation over descending distinct thresholds."""
    return ap_from_stats(RankStats.from_scores(scores, labels))


def metrics_from_stats(stats: RankStats, threshold: float = DEFAULT_THRESHOLD) -> MetricSet:
    """Full metric set; AUC/AP are included only when defined."""
    out = threshold_metrics(stats.counts_at(threshold))
    if stats.n_pos and stats.n_neg:
        out["AUC"] = auc_from_stats(stats)
    if stats.n_pos:
        out["AP"] = ap_from_stats(stats)
    return out


def image_evaluate(scores, labels, threshold: float = DEFAULT_THRESHOLD) -> MetricSet:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyInput("no items to evaluate")
    return metrics_from_stats(RankStats.from_scores(scores, labels), threshold)


def pixel_evaluate(pred_mask, gt_mask, threshold: float = DEFAULT_THRESHOLD) -> MetricSet:
    """Metrics over the pixels of one prediction/ground-truth pair.

    ``pred_mask`` is a float map in [0, 1] or an 8/16-bit quantized map;
    ``gt_mask`` is boolean or 0/1.
    """
    pred, gt = np.asarray(pred_mask), np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if pred.size == 0:
        raise EmptyInput("empty mask")
    return metrics_from_stats(RankStats.for_map(pred, gt), threshold)


def mean_metric_sets(sets: Sequence[MetricSet]) -> MetricSet:
    """Unweighted mean per metric over the sets that define it.

    Uses exactly rounded summation, so the result does not depend on order.
    """
    out = {}
    for name in METRIC_NAMES:
        vals = [s[name] for s in sets if name in s]
        if vals:
            out[name] = math.fsum(vals) / len(vals)
    return out
