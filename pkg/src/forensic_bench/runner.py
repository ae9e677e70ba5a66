"""Bind predictions to resolved protocols and compute per-group metrics.

Per-sample work (decoding masks, per-image pixel statistics) fans out over a
process pool; everything that crosses a worker boundary is a mergeable
statistic, and the final reduction runs in a fixed order, so results do not
depend on the worker count.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import PredictionRecord, SampleRecord, check_score
from .errors import (
    DuplicatePrediction,
    EvaluationError,
    ForensicBenchError,
    GroupEvaluationError,
    InputError,
    MissingMask,
    MissingPrediction,
    ProtocolViolation,
    ScoreOutOfRange,
    UnknownPrediction,
)
from .images import read_mask, read_score_map
from .metrics import (
    DEFAULT_THRESHOLD,
    METRIC_NAMES,
    MetricSet,
    RankStats,
    empty_stats,
    mean_metric_sets,
    metrics_from_stats,
    threshold_metrics,
    BinaryCounts,
)
from .protocols import ResolvedProtocol, mask_to_label

IMAGE, PIXEL, BOTH = "image", "pixel", "both"
MODES = (IMAGE, PIXEL, BOTH)
PER_IMAGE_MEAN, POOLED = "per-image-mean", "pooled"
PIXEL_AVERAGING = (PER_IMAGE_MEAN, POOLED)


def load_predictions(path, manifest_or_records) -> list[PredictionRecord]:
    """Read a line-delimited prediction file and align it to the samples.

    Returns predictions in sample order. Relative ``mask`` paths are resolved
    against the prediction file's directory.
    """
    path = Path(path)
    records = getattr(manifest_or_records, "records", manifest_or_records)
    by_id: dict[str, PredictionRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid = obj["id"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise ProtocolViolation(line_no, f"{path}: expected an object with an 'id' key") from None
            score = obj.get("score")
            if score is not None:
                score = check_score(score, f"{path}:{line_no}")
            mask = obj.get("mask")
            if mask is not None:
                mask = str((path.parent / mask)) if not os.path.isabs(mask) else mask
            if sid in by_id:
                raise DuplicatePrediction(sid)
            if score is None and mask is None:
                raise ScoreOutOfRange(f"{path}:{line_no}: prediction for {sid!r} has neither score nor mask")
            by_id[sid] = PredictionRecord(sid, score, mask)
    return align_predictions(records, by_id.values())


def align_predictions(records: Sequence[SampleRecord], predictions) -> list[PredictionRecord]:
    """Match predictions to samples by id; every sample exactly once."""
    by_id: dict[str, PredictionRecord] = {}
    for p in predictions:
        if p.sample_id in by_id:
            raise DuplicatePrediction(p.sample_id)
        by_id[p.sample_id] = p
    out = []
    for r in records:
        if r.id not in by_id:
            raise MissingPrediction(r.id)
        out.append(by_id.pop(r.id))
    if by_id:
        raise UnknownPrediction(sorted(by_id)[0])
    return out


@dataclass(frozen=True)
class _Job:
    score: Optional[float]
    pred_mask: Optional[str]
    gt_mask: Optional[str]
    sample_id: str
    label: int
    pixel: bool
    threshold: float
    keep_stats: bool


@dataclass(frozen=True)
class _ItemResult:
    score: float
    # None when the item takes no part in pixel averaging
    pixel_metrics: Optional[dict] = None
    counts: Optional[BinaryCounts] = None
    stats: Optional[RankStats] = None
    error: Optional[Exception] = None


def _run_job(job: _Job) -> _ItemResult:
    try:
        return _evaluate_item(job)
    except (ForensicBenchError, OSError, ValueError) as exc:
        return _ItemResult(float("nan"), error=exc)


def _evaluate_item(job: _Job) -> _ItemResult:
    pred_map = None
    if job.pred_mask is not None and (job.score is None or job.pixel):
        pred_map = read_score_map(job.pred_mask)
    score = job.score if job.score is not None else mask_to_label(pred_map)
    if not job.pixel:
        return _ItemResult(score)
    if job.gt_mask is None:
        if job.label == 1:
            raise MissingMask(f"fake sample {job.sample_id!r} has no ground-truth mask")
        return _ItemResult(score)
    gt = read_mask(job.gt_mask)
    if not gt.any():
        return _ItemResult(score)
    if pred_map is None:
        raise MissingMask(f"prediction for {job.sample_id!r} has no probability map")
    if pred_map.shape != gt.shape:
        raise MissingMask(f"{job.sample_id!r}: probability map {pred_map.shape} does not match mask {gt.shape}")
    stats = RankStats.for_map(pred_map, gt)
    counts = stats.counts_at(job.threshold)
    return _ItemResult(score, metrics_from_stats(stats, job.threshold), counts,
                       stats if job.keep_stats else None)


def _jobs(pairs, mode: str, threshold: float, roots: Mapping[str, str], pixel_average: str) -> list[_Job]:
    pixel = mode in (PIXEL, BOTH)
    jobs = []
    for pred, rec in pairs:
        gt = None
        if rec.mask_ref is not None:
            root = roots.get(rec.dataset_name, ".")
            gt = str(Path(root) / rec.mask_ref)
        jobs.append(_Job(pred.score, pred.mask_score_ref, gt, rec.id, rec.label, pixel, threshold,
                         pixel_average == POOLED))
    return jobs


def _reduce(pairs, results: Sequence[_ItemResult], mode: str, threshold: float, pixel_average: str) -> dict:
    for (_, rec), res in zip(pairs, results):
        if res.error is not None:
            raise res.error
    out = {}
    if mode in (IMAGE, BOTH):
        scores = np.array([r.score for r in results], dtype=np.float64)
        labels = np.array([rec.label for _, rec in pairs], dtype=bool)
        out[IMAGE] = metrics_from_stats(RankStats.from_scores(scores, labels), threshold)
    if mode in (PIXEL, BOTH):
        used = [r for r in results if r.pixel_metrics is not None]
        if pixel_average == PER_IMAGE_MEAN:
            out[PIXEL] = mean_metric_sets([r.pixel_metrics for r in used])
        elif used:
            stats = empty_stats()
            for r in used:
                stats = stats.merge(r.stats)
            out[PIXEL] = metrics_from_stats(stats, threshold)
        else:
            out[PIXEL] = {}
    return out


def _sorted_pairs(pairs):
    return sorted(pairs, key=lambda pr: pr[1].id)


def _check_args(mode: str, pixel_average: str):
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    if pixel_average not in PIXEL_AVERAGING:
        raise InputError(f"pixel averaging must be one of {PIXEL_AVERAGING}, got {pixel_average!r}")


def evaluate_group(
    pairs: Sequence[tuple[PredictionRecord, SampleRecord]],
    mode: str = IMAGE,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    roots: Optional[Mapping[str, str]] = None,
    pixel_average: str = PER_IMAGE_MEAN,
) -> dict[str, MetricSet]:
    """Metrics of one group, keyed by level (``"image"`` and/or ``"pixel"``).

    Image level ranks the prediction scores (a map's maximum stands in for a
    missing score). Pixel level averages per-image metrics over samples whose
    ground-truth mask is non-empty, or pools their pixels.
    """
    _check_args(mode, pixel_average)
    for pred, rec in pairs:
        if pred.sample_id != rec.id:
            raise InputError(f"pair misaligned: prediction {pred.sample_id!r} vs sample {rec.id!r}")
    pairs = _sorted_pairs(pairs)
    if not pairs:
        raise InputError("group is empty")
    results = [_run_job(j) for j in _jobs(pairs, mode, threshold, roots or {}, pixel_average)]
    return _reduce(pairs, results, mode, threshold, pixel_average)


@dataclass
class GroupResult:
    name: str
    metrics: dict  # level -> MetricSet
    n_items: int
    n_fake: int
    n_pixel_images: int = 0

    def to_dict(self) -> dict:
        d = {"name": self.name, "n_items": self.n_items, "n_fake": self.n_fake,
             "n_pixel_images": self.n_pixel_images}
        for level in (IMAGE, PIXEL):
            if level in self.metrics:
                d[level] = {k: self.metrics[level][k] for k in METRIC_NAMES if k in self.metrics[level]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GroupResult":
        metrics = {lvl: dict(d[lvl]) for lvl in (IMAGE, PIXEL) if lvl in d}
        return cls(d["name"], metrics, d["n_items"], d.get("n_fake", 0), d.get("n_pixel_images", 0))


@dataclass
class RunResult:
    protocol: str
    run_name: str
    groups: list[GroupResult]
    fingerprint: str = ""
    mode: str = IMAGE
    threshold: float = DEFAULT_THRESHOLD
    pixel_average: str = PER_IMAGE_MEAN
    timing: dict = field(default_factory=dict)

    def group(self, name: str) -> GroupResult:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def value(self, group: str, metric: str) -> Optional[float]:
        """``metric`` is ``"<level>.<name>"``, e.g. ``"pixel.F1"``."""
        level, name = metric.split(".", 1)
        try:
            return self.group(group).metrics.get(level, {}).get(name)
        except KeyError:
            return None

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "run": self.run_name,
            "fingerprint": self.fingerprint,
            "mode": self.mode,
            "threshold": self.threshold,
            "pixel_average": self.pixel_average,
            "groups": [g.to_dict() for g in self.groups],
        }

    def dumps(self) -> str:
        """Canonical JSON; wall-clock timing is kept out so the bytes are reproducible."""
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunResult":
        d = json.loads(text)
        return cls(d["protocol"], d["run"], [GroupResult.from_dict(g) for g in d["groups"]],
                   d.get("fingerprint", ""), d.get("mode", IMAGE), d.get("threshold", DEFAULT_THRESHOLD),
                   d.get("pixel_average", PER_IMAGE_MEAN))

    def write(self, path) -> Path:
        """Write the result and a ``.timing.json`` sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(), encoding="utf-8")
        if self.timing:
            timing_path = path.with_name(path.stem + ".timing.json")
            timing_path.write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "RunResult":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _map(jobs: list[_Job], workers: int) -> list[_ItemResult]:
    if workers <= 1 or len(jobs) < 2:
        return [_run_job(j) for j in jobs]
    chunk = max(1, math.ceil(len(jobs) / (workers * 4)))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs, chunksize=chunk))


def evaluate_run(
    resolved: ResolvedProtocol,
    predictions: Mapping[str, Sequence[PredictionRecord]],
    mode: str = IMAGE,
    threshold: float = DEFAULT_THRESHOLD,
    workers: int = 1,
    *,
    roots: Optional[Mapping[str, str]] = None,
    pixel_average: str = PER_IMAGE_MEAN,
    run_name: Optional[str] = None,
    fingerprint: str = "",
) -> RunResult:
    """Evaluate every group of a resolved protocol.

    Raises :class:`GroupEvaluationError` naming each failed group.
    """
    _check_args(mode, pixel_average)
    if workers < 1:
        raise InputError(f"workers must be >= 1, got {workers}")
    roots = roots or {}
    t0 = time.perf_counter()
    failures: dict[str, Exception] = {}
    bound: dict[str, list] = {}
    for group in resolved.groups:
        if group.name not in predictions:
            failures[group.name] = MissingPrediction(f"<all samples of group {group.name}>")
            continue
        try:
            preds = align_predictions(group.records, predictions[group.name])
        except InputError as exc:
            failures[group.name] = exc
            continue
        if not group.records:
            failures[group.name] = InputError("group is empty")
            continue
        bound[group.name] = _sorted_pairs(list(zip(preds, group.records)))
    t1 = time.perf_counter()

    spans, jobs = {}, []
    for name, pairs in bound.items():
        spans[name] = (len(jobs), len(jobs) + len(pairs))
        jobs.extend(_jobs(pairs, mode, threshold, roots, pixel_average))
    results = _map(jobs, workers)
    t2 = time.perf_counter()

    groups = []
    for group in resolved.groups:
        if group.name not in bound:
            continue
        pairs = bound[group.name]
        lo, hi = spans[group.name]
        try:
            metrics = _reduce(pairs, results[lo:hi], mode, threshold, pixel_average)
        except (ForensicBenchError, OSError, ValueError) as exc:
            failures[group.name] = exc
            continue
        n_px = sum(1 for r in results[lo:hi] if r.pixel_metrics is not None)
        groups.append(GroupResult(group.name, metrics, len(pairs), sum(rec.label for _, rec in pairs), n_px))
    t3 = time.perf_counter()
    if failures:
        ordered = {g.name: failures[g.name] for g in resolved.groups if g.name in failures}
        raise GroupEvaluationError(ordered)
    return RunResult(
        resolved.spec.name, run_name or resolved.spec.name, groups, fingerprint, mode, threshold, pixel_average,
        timing={"bind": t1 - t0, "evaluate": t2 - t1, "reduce": t3 - t2, "workers": workers},
    )
