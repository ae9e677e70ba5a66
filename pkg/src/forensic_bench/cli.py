"""Command-line entry point: ingest, slice, plan, eval, report, extract, run.

Exit codes: 0 success, 2 configuration or input error, 3 evaluation error.

Artifacts land below the output directory::

    manifests/<dataset>.jsonl          manifests/<dataset>.sliced.jsonl
    tiles/<dataset>/{images,masks}/    plans/epoch_<NNN>.jsonl
    results/<run>.json                 report/<protocol>.<level>-<metric>.{csv,md}
    features/<stem>.<extractor>.npy
"""

from __future__ import annotations

import argparse
import copy
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .adapter import exec_model
from .config import RunConfig, load_config, parse_config, resolve_workers
from .core import DatasetManifest, SampleRecord, SplitTag, make_sample
from .errors import (
    ConfigError,
    DimensionMismatch,
    EvaluationError,
    ForensicBenchError,
    GroupEvaluationError,
    InputError,
)
from .images import read_image, to_gray, write_image
from .ingest import ingest_splits, validate_manifest
from .preprocess import (
    EXTRACTORS,
    bayar_project,
    bayar_residual,
    block_dct,
    check_extractor,
    slice_image_and_mask,
    sobel_magnitude,
    tile_plan,
)
from .protocols import builtin_protocol, iff_epoch_plan, resolve_protocol
from .report import emit_csv, emit_markdown, table_from_results
from .runner import RunResult, evaluate_run, load_predictions

log = logging.getLogger("forensic_bench")

EXIT_OK, EXIT_INPUT, EXIT_EVAL = 0, 2, 3


class _Ctx:
    """Parsed flags plus the (optional) config they override."""

    def __init__(self, args):
        self.args = args
        self.cfg: Optional[RunConfig] = None
        if args.config:
            cfg, doc = load_config(args.config)
            doc = copy.deepcopy(doc) if isinstance(doc, dict) else {}
            if args.seed is not None:
                doc["seed"] = args.seed
            if args.threshold is not None:
                doc.setdefault("metrics", {})
                if not isinstance(doc["metrics"], dict):
                    raise ConfigError("metrics: expected a mapping")
                doc["metrics"]["threshold"] = args.threshold
            self.cfg = parse_config(doc, Path(args.config).parent)
        self.workers = resolve_workers(args.workers, self.cfg)
        if args.out is not None:
            self.out = Path(args.out)
        elif self.cfg is not None:
            self.out = self.cfg.out
        else:
            self.out = Path("out")

    def config(self) -> RunConfig:
        if self.cfg is None:
            raise ConfigError(f"'{self.args.command}' needs --config")
        return self.cfg

    @property
    def seed(self) -> int:
        if self.args.seed is not None:
            return self.args.seed
        return self.cfg.seed if self.cfg else 0

    def manifest_path(self, name: str, sliced: bool = False) -> Path:
        return self.out / "manifests" / (f"{name}.sliced.jsonl" if sliced else f"{name}.jsonl")

    def tiles_dir(self, name: str) -> Path:
        return self.out / "tiles" / name


# ingest

def _ingest_one(ctx: _Ctx, name: str) -> bool:
    ds = ctx.config().dataset(name)
    manifest = ingest_splits(ds.root, {s.value: lay for s, lay in ds.layouts.items()}, ds.name, ds.domain)
    path = manifest.write(ctx.manifest_path(ds.name))
    report = validate_manifest(manifest, ds.root)
    print(f"{ds.name}: {manifest.real_count} real, {manifest.fake_count} fake -> {path}")
    if report:
        print(f"{ds.name}: {len(report)} validation issue(s)")
        print(report.format())
        return False
    print(f"{ds.name}: validation clean")
    return True


def cmd_ingest(ctx: _Ctx) -> int:
    cfg = ctx.config()
    names = ctx.args.datasets or list(cfg.datasets)
    ok = True
    for name in names:
        ok = _ingest_one(ctx, name) and ok
    return EXIT_OK if ok else EXIT_INPUT


# slice

def _slice_record(job) -> list[dict]:
    rec_d, root, out_dir, tile = job
    rec = SampleRecord.from_dict(rec_d)
    image = read_image(Path(root) / rec.image_ref)
    mask = None
    if rec.mask_ref is not None:
        mask_path = Path(root) / rec.mask_ref
        if not mask_path.is_file():
            raise DimensionMismatch(f"{rec.id}: declared mask {mask_path} is missing")
        mask = read_image(mask_path)  # raw, so mask tiles stay bit-exact
    h, w = image.shape[:2]
    if mask is not None and mask.shape[:2] != (h, w):
        raise DimensionMismatch(f"{rec.id}: mask is {mask.shape[1]}x{mask.shape[0]}, image is {w}x{h}")
    plan = tile_plan(w, h, tile)
    out = []
    for t in slice_image_and_mask(image, mask, plan, label=rec.label):
        tid = t.name(rec.id)
        image_ref = f"images/{tid}.png"
        write_image(Path(out_dir) / image_ref, t.image)
        mask_ref = None
        if t.mask is not None:
            mask_ref = f"masks/{tid}.png"
            write_image(Path(out_dir) / mask_ref, t.mask)
        padded = dict(orig_width=w, orig_height=h) if t.padded else {}
        out.append(make_sample(tid, image_ref, t.label, rec.domain, rec.dataset_name, rec.split,
                               mask_ref, **padded).to_dict())
    return out


def _pmap(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    chunk = max(1, math.ceil(len(jobs) / (workers * 4)))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def _slice_one(ctx: _Ctx, name: str, tile: Optional[int]) -> Path:
    ds = ctx.config().dataset(name)
    tile = tile or ds.tile or 512
    src = ctx.manifest_path(ds.name)
    if not src.is_file():
        raise ConfigError(f"no manifest for {ds.name!r} at {src}; run 'ingest' first")
    manifest = DatasetManifest.read(src)
    out_dir = ctx.tiles_dir(ds.name)
    jobs = [(r.to_dict(), str(ds.root), str(out_dir), tile) for r in manifest.records]
    tiles = [SampleRecord.from_dict(d) for part in _pmap(_slice_record, jobs, ctx.workers) for d in part]
    sliced = DatasetManifest.from_records(ds.name, ds.domain, tiles)
    path = sliced.write(ctx.manifest_path(ds.name, sliced=True))
    print(f"{ds.name}: {len(manifest)} images -> {len(sliced)} tiles of {tile}x{tile} -> {path}")
    return path


def cmd_slice(ctx: _Ctx) -> int:
    cfg = ctx.config()
    names = ctx.args.datasets or [n for n, d in cfg.datasets.items() if d.tile]
    if not names:
        raise ConfigError("no dataset given and none declares 'tile'")
    for name in names:
        _slice_one(ctx, name, ctx.args.tile)
    return EXIT_OK


# manifests for evaluation / planning

def _load_manifests(ctx: _Ctx, names: Sequence[str]) -> tuple[dict, dict]:
    cfg = ctx.config()
    manifests, roots = {}, {}
    for name in names:
        ds = cfg.dataset(name) if cfg.datasets else None
        sliced = bool(ds and ds.tile)
        path = ctx.manifest_path(name, sliced=sliced)
        if not path.is_file():
            step = "slice" if sliced else "ingest"
            raise ConfigError(f"no manifest for {name!r} at {path}; run '{step}' first")
        manifests[name] = DatasetManifest.read(path)
        roots[name] = str(ctx.tiles_dir(name) if sliced else (ds.root if ds else "."))
    return manifests, roots


def cmd_plan(ctx: _Ctx) -> int:
    cfg = ctx.config()
    epochs = ctx.args.epochs if ctx.args.epochs is not None else cfg.plan.epochs
    if epochs < 1:
        raise ConfigError(f"epochs must be positive, got {epochs}")
    if cfg.protocol is not None and cfg.protocol.train_refs:
        spec = cfg.protocol
        manifests, _ = _load_manifests(ctx, list(dict.fromkeys(n for n, _ in spec.train_refs)))
        pools = resolve_protocol(spec, manifests, with_train=True).train_pools()
    else:
        manifests, _ = _load_manifests(ctx, list(cfg.datasets))
        pools = {}
        for m in manifests.values():
            pools.setdefault(m.domain, [])
            pools[m.domain].extend(f"{m.name}/{r.id}" for r in m.by_split(SplitTag.TRAIN))
    for epoch in range(epochs):
        plan = iff_epoch_plan(pools, cfg.plan.epoch_size, seed=ctx.seed, epoch=epoch)
        path = plan.write(ctx.out / "plans" / f"epoch_{epoch:03d}.jsonl")
        print(f"epoch {epoch}: {plan.total()} draws ({plan.epoch_size} per domain) -> {path}")
    return EXIT_OK


# eval

def _predictions(ctx: _Ctx, resolved, roots) -> tuple[dict, dict]:
    cfg = ctx.config()
    preds, failures = {}, {}
    src = cfg.predictions
    for group in resolved.groups:
        try:
            if src.exec is not None:
                preds[group.name] = exec_model(src.exec.command, group.records, src.exec.batch,
                                               src.exec.timeout, root=roots, cwd=cfg.base_dir)
            elif group.name in src.files:
                preds[group.name] = load_predictions(src.files[group.name], group.records)
            else:
                raise ConfigError(f"no predictions configured for group {group.name!r}")
        except (ForensicBenchError, OSError) as exc:
            failures[group.name] = exc
    return preds, failures


def _eval(ctx: _Ctx) -> Path:
    cfg = ctx.config()
    spec = cfg.require_protocol()
    eval_names = list(dict.fromkeys(n for g in spec.eval_groups for n, _ in g.refs))
    manifests, roots = _load_manifests(ctx, eval_names)
    resolved = resolve_protocol(spec, manifests, with_train=False)
    preds, failures = _predictions(ctx, resolved, roots)
    if failures:
        raise GroupEvaluationError(failures)
    m = cfg.metrics
    result = evaluate_run(resolved, preds, m.mode, m.threshold, ctx.workers, roots=roots,
                          pixel_average=m.pixel_average, run_name=cfg.run_name, fingerprint=cfg.fingerprint)
    path = result.write(ctx.out / "results" / f"{cfg.run_name}.json")
    for g in result.groups:
        cells = ", ".join(f"{lvl}.{k}={v:.4f}" for lvl, ms in g.metrics.items() for k, v in ms.items()
                          if k in ("AUC", "F1", "ACC"))
        print(f"{g.name}: n={g.n_items} {cells}")
    print(f"result -> {path}")
    return path


def cmd_eval(ctx: _Ctx) -> int:
    _eval(ctx)
    return EXIT_OK


# report

def _report(ctx: _Ctx, paths: Sequence[Path]) -> list[Path]:
    cfg = ctx.cfg
    if not paths:
        paths = sorted(p for p in (ctx.out / "results").glob("*.json") if not p.name.endswith(".timing.json"))
    if not paths:
        raise ConfigError(f"no result files given and none found under {ctx.out / 'results'}")
    results = []
    for p in paths:
        try:
            results.append(RunResult.read(p))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read result {p}: {exc}") from None
    by_protocol: dict[str, list[RunResult]] = {}
    for r in results:
        by_protocol.setdefault(r.protocol, []).append(r)
    written = []
    for name, rs in by_protocol.items():
        if cfg is not None and cfg.protocol is not None and cfg.protocol.name == name:
            spec = cfg.protocol
        else:
            spec = builtin_protocol(name)
        metrics = ctx.args_metrics or (cfg.metrics.select if cfg and cfg.metrics.select else [spec.default_metric])
        for metric in metrics:
            table = table_from_results(rs, spec, metric)
            stem = f"{name}.{metric.replace('.', '-')}"
            report_dir = ctx.out / "report"
            written += [emit_csv(table, report_dir / f"{stem}.csv"), emit_markdown(table, report_dir / f"{stem}.md")]
    for p in written:
        print(f"report -> {p}")
    return written


def cmd_report(ctx: _Ctx) -> int:
    _report(ctx, [Path(p) for p in ctx.args.results])
    return EXIT_OK


# extract

def cmd_extract(ctx: _Ctx) -> int:
    name = check_extractor(ctx.args.extractor)
    src = Path(ctx.args.image)
    try:
        image = to_gray(read_image(src)).astype(np.float64)
    except OSError as exc:
        raise InputError(f"cannot read image {src}: {exc}") from None
    out = Path(ctx.args.output) if ctx.args.output else ctx.out / "features" / f"{src.stem}.{name}.npy"
    out.parent.mkdir(parents=True, exist_ok=True)
    if name == "sobel":
        np.save(out, sobel_magnitude(image))
    elif name == "dct":
        coeffs = block_dct(image)
        e_pix, e_coef = math.fsum((image ** 2).ravel()), math.fsum((coeffs ** 2).ravel())
        rel = abs(e_pix - e_coef) / max(e_pix, 1e-300)
        log.info("parseval: pixel energy %.12g, coefficient energy %.12g, relative error %.3g", e_pix, e_coef, rel)
        print(f"parseval relative error {rel:.3g}")
        np.save(out, coeffs)
    else:
        rng = np.random.default_rng(ctx.seed)
        kernel = bayar_project(rng.standard_normal((ctx.args.kernel_size, ctx.args.kernel_size)))
        kernel_out = out.with_name(f"{src.stem}.bayar-kernel.npy")
        np.save(kernel_out, kernel)
        np.save(out, bayar_residual(image, kernel))
        print(f"kernel -> {kernel_out}")
    print(f"{name} -> {out}")
    return EXIT_OK


# run

def cmd_run(ctx: _Ctx) -> int:
    cfg = ctx.config()
    spec = cfg.require_protocol()
    needed = list(dict.fromkeys(n for g in spec.eval_groups for n, _ in g.refs))
    for name in needed:
        if not _ingest_one(ctx, name):
            return EXIT_INPUT
        if cfg.dataset(name).tile:
            _slice_one(ctx, name, None)
    result = _eval(ctx)
    _report(ctx, [result])
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "slice": cmd_slice, "plan": cmd_plan, "eval": cmd_eval,
    "report": cmd_report, "extract": cmd_extract, "run": cmd_run,
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=_u64, help="override the config seed")
    common.add_argument("--workers", type=_positive, help="worker processes ($FORENSIC_BENCH_WORKERS as fallback)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threshold", type=float, help="decision threshold for thresholded metrics")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = argparse.ArgumentParser(prog="forensic-bench", description="Forgery detection and localization benchmark harness.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="scan dataset trees into manifests")
    s.add_argument("datasets", nargs="*", help="dataset names (default: all declared)")

    s = sub.add_parser("slice", parents=[common], help="cut ingested images and masks into tiles")
    s.add_argument("datasets", nargs="*", help="dataset names (default: those declaring 'tile')")
    s.add_argument("--tile", type=_positive, help="tile edge in pixels (default: config or 512)")

    s = sub.add_parser("plan", parents=[common], help="write balanced per-epoch training plans")
    s.add_argument("--epochs", type=int, help="number of epoch plans (default: config plan.epochs)")

    sub.add_parser("eval", parents=[common], help="evaluate predictions under the configured protocol")

    s = sub.add_parser("report", parents=[common], help="tabulate results as CSV and Markdown")
    s.add_argument("results", nargs="*", help="result files (default: all under <out>/results)")
    s.add_argument("--metric", action="append", dest="metrics", help="'level.name' column metric; repeatable")

    s = sub.add_parser("extract", parents=[common], help="dump a hand-crafted feature map for one image")
    s.add_argument("image")
    s.add_argument("--extractor", "-e", required=True, choices=EXTRACTORS)
    s.add_argument("--output", "-o", help="output .npy path")
    s.add_argument("--kernel-size", type=int, default=5, help="bayar-demo kernel edge (odd)")

    sub.add_parser("run", parents=[common], help="ingest, slice, eval and report in one go")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        ctx = _Ctx(args)
        ctx.args_metrics = getattr(args, "metrics", None)
        return COMMANDS[args.command](ctx)
    except GroupEvaluationError as exc:
        for group, err in exc.failures.items():
            print(f"error: group {group}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_EVAL
    except EvaluationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (InputError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
