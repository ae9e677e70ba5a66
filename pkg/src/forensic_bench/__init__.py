"""Evaluation harness for fake image detection and localization across the
deepfake, manipulation, generated-image and document domains."""

__version__ = "0.1.0"

from .core import DatasetManifest, DomainTag, PredictionRecord, SampleRecord, SplitTag, make_sample
from .metrics import BinaryCounts, RankStats, auc, average_precision, image_evaluate, pixel_evaluate
from .protocols import ProtocolSpec, builtin_protocol, iff_epoch_plan, resolve_protocol
from .runner import RunResult, evaluate_group, evaluate_run

__all__ = [
    "BinaryCounts", "DatasetManifest", "DomainTag", "PredictionRecord", "ProtocolSpec", "RankStats",
    "RunResult", "SampleRecord", "SplitTag", "auc", "average_precision", "builtin_protocol",
    "evaluate_group", "evaluate_run", "iff_epoch_plan", "image_evaluate", "make_sample",
    "pixel_evaluate", "resolve_protocol",
]
