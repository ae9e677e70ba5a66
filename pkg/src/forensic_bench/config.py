"""Run configuration: one YAML/JSON document drives every subcommand.

Parsing is fail-closed: an unknown key anywhere raises :class:`ConfigError`
naming its full path (``datasets[1].layout.mask_sufix``). Relative paths are
taken relative to the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .core import DomainTag, SplitTag
from .errors import ConfigError, LayoutMismatch, UnknownProtocol
from .ingest import LayoutSpec
from .metrics import DEFAULT_THRESHOLD, METRIC_NAMES
from .protocols import Aggregate, EvalGroup, ProtocolSpec, builtin_protocol
from .runner import MODES, PER_IMAGE_MEAN, PIXEL_AVERAGING

WORKERS_ENV = "FORENSIC_BENCH_WORKERS"


@dataclass
class DatasetConfig:
    name: str
    domain: DomainTag
    root: Path
    # per split; path fields may contain "{split}"
    layouts: dict[SplitTag, LayoutSpec]
    tile: Optional[int] = None


@dataclass
class MetricsConfig:
    mode: str = "image"
    select: list[str] = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD
    pixel_average: str = PER_IMAGE_MEAN


@dataclass
class ExecConfig:
    command: str
    batch: int = 16
    timeout: float = 60.0


@dataclass
class PredictionsConfig:
    files: dict[str, Path] = field(default_factory=dict)
    exec: Optional[ExecConfig] = None


@dataclass
class PlanConfig:
    epochs: int = 1
    epoch_size: Optional[int] = None


@dataclass
class RunConfig:
    datasets: dict[str, DatasetConfig]
    protocol: Optional[ProtocolSpec] = None
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    predictions: PredictionsConfig = field(default_factory=PredictionsConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    seed: int = 0
    workers: Optional[int] = None
    out: Path = Path("out")
    name: Optional[str] = None
    fingerprint: str = ""
    base_dir: Path = Path(".")

    @property
    def run_name(self) -> str:
        if self.name:
            return self.name
        return self.protocol.name if self.protocol else "run"

    def dataset(self, name: str) -> DatasetConfig:
        if name not in self.datasets:
            raise ConfigError(f"dataset {name!r} is not declared (declared: {', '.join(self.datasets) or 'none'})")
        return self.datasets[name]

    def require_protocol(self) -> ProtocolSpec:
        if self.protocol is None:
            raise ConfigError("config has no 'protocol'")
        return self.protocol


def _obj(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(value).__name__}")
    return value


def _keys(d: dict, path: str, allowed, required=()):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown key {_join(path, k)!r}")
    for k in required:
        if k not in d:
            raise ConfigError(f"missing required key {_join(path, k)!r}")


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _typed(value, kind, path: str):
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is str and not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def _enum(enum_cls, value, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{path}: {value!r} is not one of {choices}") from None


LAYOUT_KEYS = ("kind", "real_dir", "fake_dir", "index_file", "mask_dir", "mask_suffix")


def _layout(d, path: str) -> LayoutSpec:
    d = _obj(d, path)
    _keys(d, path, LAYOUT_KEYS, ("kind",))
    for k, v in d.items():
        _typed(v, str, _join(path, k))
    try:
        return LayoutSpec(**d)
    except LayoutMismatch as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _dataset(d, path: str, base: Path) -> DatasetConfig:
    d = _obj(d, path)
    _keys(d, path, ("name", "domain", "root", "layout", "splits", "tile"), ("name", "domain", "root"))
    name = _typed(d["name"], str, _join(path, "name"))
    domain = _enum(DomainTag, d["domain"], _join(path, "domain"))
    root = base / _typed(d["root"], str, _join(path, "root"))
    splits = d.get("splits", ["test"])
    layouts: dict[SplitTag, LayoutSpec] = {}
    if isinstance(splits, dict):
        # explicit layout per split
        if "layout" in d:
            raise ConfigError(f"{path}: give either 'layout' or per-split layouts under 'splits', not both")
        for s, lay in splits.items():
            split = _enum(SplitTag, s, _join(_join(path, "splits"), s))
            layouts[split] = _layout(lay, _join(_join(path, "splits"), s))
    else:
        if not isinstance(splits, list) or not splits:
            raise ConfigError(f"{_join(path, 'splits')}: expected a non-empty list or mapping")
        if "layout" not in d:
            raise ConfigError(f"missing required key {_join(path, 'layout')!r}")
        layout = _layout(d["layout"], _join(path, "layout"))
        for i, s in enumerate(splits):
            split = _enum(SplitTag, s, f"{_join(path, 'splits')}[{i}]")
            layouts[split] = layout.with_split(split.value)
    tile = d.get("tile")
    if tile is not None:
        tile = _typed(tile, int, _join(path, "tile"))
        if tile < 8:
            raise ConfigError(f"{_join(path, 'tile')}: must be >= 8")
    return DatasetConfig(name, domain, root, layouts, tile)


def _refs(value, path: str) -> tuple:
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of [dataset, split] pairs")
    out = []
    for i, ref in enumerate(value):
        p = f"{path}[{i}]"
        if isinstance(ref, str):
            out.append((ref, SplitTag.TEST))
        elif isinstance(ref, list) and len(ref) == 2:
            out.append((_typed(ref[0], str, p), _enum(SplitTag, ref[1], p)))
        else:
            raise ConfigError(f"{p}: expected 'dataset' or [dataset, split]")
    return tuple(out)


def _protocol(value, path: str) -> ProtocolSpec:
    if isinstance(value, str):
        try:
            return builtin_protocol(value)
        except UnknownProtocol as exc:
            raise ConfigError(f"{path}: {exc}") from None
    d = _obj(value, path)
    _keys(d, path, ("name", "train", "eval_groups", "aggregates", "metric"), ("name", "eval_groups"))
    groups = []
    for i, g in enumerate(d["eval_groups"] or []):
        p = f"{_join(path, 'eval_groups')}[{i}]"
        g = _obj(g, p)
        _keys(g, p, ("name", "refs"), ("name", "refs"))
        groups.append(EvalGroup(_typed(g["name"], str, _join(p, "name")), _refs(g["refs"], _join(p, "refs"))))
    aggs = []
    for i, a in enumerate(d.get("aggregates") or []):
        p = f"{_join(path, 'aggregates')}[{i}]"
        a = _obj(a, p)
        _keys(a, p, ("name", "groups"), ("name", "groups"))
        aggs.append(Aggregate(_typed(a["name"], str, _join(p, "name")), tuple(a["groups"])))
    metric = d.get("metric", "image.AUC")
    _check_metric(metric, _join(path, "metric"))
    try:
        return ProtocolSpec(_typed(d["name"], str, _join(path, "name")), _refs(d.get("train", []), _join(path, "train")),
                            tuple(groups), tuple(aggs), metric)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _check_metric(metric, path: str):
    level, _, name = str(metric).partition(".")
    if level not in ("image", "pixel") or name not in METRIC_NAMES:
        raise ConfigError(f"{path}: metric must look like 'image.AUC' or 'pixel.F1', got {metric!r}")


def _metrics(d, path: str) -> MetricsConfig:
    d = _obj(d, path)
    _keys(d, path, ("mode", "select", "threshold", "pixel_average"))
    m = MetricsConfig()
    if "mode" in d:
        if d["mode"] not in MODES:
            raise ConfigError(f"{_join(path, 'mode')}: must be one of {', '.join(MODES)}")
        m.mode = d["mode"]
    if "select" in d:
        sel = d["select"]
        if isinstance(sel, str):
            sel = [sel]
        for i, s in enumerate(sel):
            _check_metric(s, f"{_join(path, 'select')}[{i}]")
        m.select = list(sel)
    if "threshold" in d:
        m.threshold = _typed(d["threshold"], float, _join(path, "threshold"))
    if "pixel_average" in d:
        if d["pixel_average"] not in PIXEL_AVERAGING:
            raise ConfigError(f"{_join(path, 'pixel_average')}: must be one of {', '.join(PIXEL_AVERAGING)}")
        m.pixel_average = d["pixel_average"]
    return m


def _predictions(d, path: str, base: Path) -> PredictionsConfig:
    d = _obj(d, path)
    _keys(d, path, ("files", "exec"))
    p = PredictionsConfig()
    for g, f in _obj(d.get("files", {}) or {}, _join(path, "files")).items():
        p.files[str(g)] = base / _typed(f, str, _join(_join(path, "files"), g))
    if d.get("exec") is not None:
        e = _obj(d["exec"], _join(path, "exec"))
        ep = _join(path, "exec")
        _keys(e, ep, ("command", "batch", "timeout"), ("command",))
        p.exec = ExecConfig(_typed(e["command"], str, _join(ep, "command")),
                            _typed(e.get("batch", 16), int, _join(ep, "batch")),
                            _typed(e.get("timeout", 60.0), float, _join(ep, "timeout")))
    if p.files and p.exec:
        raise ConfigError(f"{path}: give either 'files' or 'exec', not both")
    return p


def _plan(d, path: str) -> PlanConfig:
    d = _obj(d, path)
    _keys(d, path, ("epochs", "epoch_size"))
    p = PlanConfig()
    if "epochs" in d:
        p.epochs = _typed(d["epochs"], int, _join(path, "epochs"))
    if d.get("epoch_size") is not None:
        p.epoch_size = _typed(d["epoch_size"], int, _join(path, "epoch_size"))
    return p


TOP_KEYS = ("name", "datasets", "protocol", "metrics", "predictions", "plan", "seed", "workers", "out")
# execution-only keys do not change results and stay out of the fingerprint
_UNFINGERPRINTED = ("workers", "out")


def fingerprint(doc: dict) -> str:
    d = {k: v for k, v in doc.items() if k not in _UNFINGERPRINTED}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_config(doc: Any, base_dir=".") -> RunConfig:
    base = Path(base_dir)
    doc = _obj(doc if doc is not None else {}, "")
    _keys(doc, "", TOP_KEYS)
    datasets = {}
    for i, d in enumerate(doc.get("datasets") or []):
        ds = _dataset(d, f"datasets[{i}]", base)
        if ds.name in datasets:
            raise ConfigError(f"datasets[{i}].name: {ds.name!r} declared twice")
        datasets[ds.name] = ds
    cfg = RunConfig(datasets=datasets, base_dir=base)
    if doc.get("protocol") is not None:
        cfg.protocol = _protocol(doc["protocol"], "protocol")
    if "metrics" in doc:
        cfg.metrics = _metrics(doc["metrics"], "metrics")
    if "predictions" in doc:
        cfg.predictions = _predictions(doc["predictions"], "predictions", base)
    if "plan" in doc:
        cfg.plan = _plan(doc["plan"], "plan")
    if "seed" in doc:
        cfg.seed = _typed(doc["seed"], int, "seed")
        if not 0 <= cfg.seed < 2**64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
    if doc.get("workers") is not None:
        cfg.workers = _typed(doc["workers"], int, "workers")
        if cfg.workers < 1:
            raise ConfigError("workers: must be >= 1")
    if "out" in doc:
        cfg.out = base / _typed(doc["out"], str, "out")
    if "name" in doc:
        cfg.name = _typed(doc["name"], str, "name")
    if cfg.protocol is not None:
        for ref in cfg.protocol.referenced_datasets():
            if ref not in datasets and datasets:
                # declared-before-use: only enforced when the config declares datasets at all
                raise ConfigError(f"protocol references undeclared dataset {ref!r}")
    cfg.fingerprint = fingerprint(doc)
    return cfg


def load_config(path) -> tuple[RunConfig, dict]:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from None
    return parse_config(doc, path.parent), doc


def resolve_workers(flag: Optional[int], cfg: Optional[RunConfig]) -> int:
    """--workers flag, then the config, then $FORENSIC_BENCH_WORKERS, then CPU count."""
    if flag is not None:
        n = flag
    elif cfg is not None and cfg.workers is not None:
        n = cfg.workers
    elif os.environ.get(WORKERS_ENV):
        try:
            n = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f"${WORKERS_ENV} must be an integer") from None
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigError("workers must be >= 1")
    return n
