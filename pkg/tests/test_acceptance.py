"""Acceptance criteria, one test each, at the stated tolerances.

Every test appends a PASS/FAIL line to RESULTS; conftest prints them in the
terminal summary.
"""

import functools
import math
import os
import random
import time

import numpy as np
import pytest

import oracles
from conftest import save_png
from synth import pixel_dataset
from forensic_bench.core import DomainTag, PredictionRecord, SplitTag, make_sample, DatasetManifest
from forensic_bench.ingest import frame_indices
from forensic_bench.metrics import BinaryCounts, auc, average_precision, image_evaluate, pixel_evaluate, threshold_metrics
from forensic_bench.preprocess import block_dct, inverse_block_dct, slice_image_and_mask, tile_plan
from forensic_bench.protocols import Aggregate, EvalGroup, ProtocolSpec, iff_epoch_plan, resolve_protocol
from forensic_bench.report import markdown_text, table_from_results
from forensic_bench.runner import GroupResult, RunResult, evaluate_run

RESULTS: list[str] = []


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS.append(f"FAIL  {number:>2}. {title} ({time.perf_counter() - t0:.2f}s): {exc}".splitlines()[0])
                raise
            extra = f"; {detail}" if detail else ""
            RESULTS.append(f"PASS  {number:>2}. {title} ({time.perf_counter() - t0:.2f}s{extra})")
        return run
    return wrap


# 1. aggregation fixtures

def _row_table(run, groups, values, aggregates):
    spec = ProtocolSpec("fixture", (), tuple(EvalGroup(g, ((g, SplitTag.TEST),)) for g in groups), aggregates)
    res = RunResult("fixture", run, [GroupResult(g, {"pixel": {"F1": v}}, 1, 1) for g, v in zip(groups, values)])
    table = table_from_results([res], spec, "pixel.F1")
    cells = markdown_text(table).splitlines()[-1].strip("|").split("|")
    return dict(zip(["run"] + table.columns, (c.strip() for c in cells)))


@criterion(1, "aggregation fixtures reproduce reference averages")
def test_c01_aggregation_fixtures():
    t0 = time.perf_counter()
    doctamper = ("DocTamperTest", "DocTamperFCD", "DocTamperSCD")
    avg_d = (Aggregate("Average_D", doctamper),)
    dtd = _row_table("DTD", doctamper, (0.6856, 0.7392, 0.8031), avg_d)
    caftb = _row_table("CAFTB", doctamper, (0.2917, 0.3770, 0.3275), avg_d)
    seven = doctamper + ("T-SROIE", "OSTF", "TPIC-13", "RTM")
    caftb_all = _row_table("CAFTB", seven, (0.2917, 0.3770, 0.3275, 0.2617, 0.1194, 0.3007, 0.0328),
                           (Aggregate("Average_All", seven),))
    elapsed = time.perf_counter() - t0
    assert dtd["Average_D"] == "0.7426"
    assert caftb["Average_D"] == "0.3321"
    assert caftb_all["Average_All"] == "0.2444"
    assert elapsed < 1.0
    return "0.7426 / 0.3321 / 0.2444"


# 2. metric oracle equivalence

@criterion(2, "all ten metrics match brute-force oracles on 1000 instances")
def test_c02_metric_oracles():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        if i % 2 == 0:
            n = int(rng.integers(1, 65))
            grid = int(rng.choice([4, 10, 1000]))
            scores = (rng.integers(0, grid + 1, n) / grid).tolist()
            labels = (rng.random(n) < rng.random()).astype(int).tolist()
            got = image_evaluate(scores, labels)
        else:
            gt = rng.random((16, 16)) < rng.random()
            pred = rng.integers(0, 256, (16, 16)).astype(np.uint8)
            scores = (pred / 255.0).ravel().tolist()
            labels = gt.ravel().astype(int).tolist()
            got = pixel_evaluate(pred, gt)
        want = oracles.all_metrics(scores, labels)
        assert set(got) == set(want)
        for k in want:
            worst = max(worst, abs(got[k] - want[k]))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12, worst
    assert elapsed < 10.0, elapsed
    return f"max |diff| {worst:.1e}"


# 3. canonical rank fixtures

@criterion(3, "canonical AUC/AP fixtures")
def test_c03_rank_fixtures():
    scores, labels = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    a, ap = auc(scores, labels), average_precision(scores, labels)
    assert a == 0.75
    assert abs(ap - 0.8333) <= 1e-4 and abs(ap - 5 / 6) <= 1e-9
    assert auc([0.5] * 8, [0, 1] * 4) == 0.5
    return f"AUC {a}, AP {ap:.10f}"


# 4. algebraic identities

@criterion(4, "F1/IoU and ACC identities; AUC invariant under cubing")
def test_c04_identities():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 10**6, 4))
        if not tp + fp + tn + fn:
            continue
        m = threshold_metrics(BinaryCounts(tp, fp, tn, fn))
        worst = max(worst, abs(m["F1"] - 2 * m["IoU"] / (1 + m["IoU"])),
                    abs(m["ACC"] - (tp + tn) / (tp + fp + tn + fn)))
    assert worst <= 1e-12, worst
    for _ in range(300):
        n = int(rng.integers(2, 200))
        scores = rng.integers(0, 10**6, n) / 10**6
        labels = np.arange(n) % 2
        assert auc(scores, labels) == auc(scores ** 3, labels)
    return f"max |diff| {worst:.1e}"


# 5. tiling properties

@criterion(5, "tiling covers, aligns masks and labels tiles on 200 sizes")
def test_c05_tiling():
    rng = np.random.default_rng(5)
    tile = 512
    for i in range(200):
        if i % 10 == 0:
            w, h = (int(v) * tile for v in rng.integers(1, 5, 2))
        else:
            w, h = (int(v) for v in rng.integers(64, 2049, 2))
        plan = tile_plan(w, h, tile)
        cover = np.zeros((h, w), np.uint8)
        for x, y in plan.offsets:
            cover[y:y + tile, x:x + tile] += 1
        assert cover.min() >= 1, (w, h)
        if w % tile == 0 and h % tile == 0:
            assert cover.max() == 1, (w, h)
        mask = np.zeros((h, w), np.uint8)
        rects = []
        for _ in range(int(rng.integers(0, 4))):
            x, y = int(rng.integers(0, w)), int(rng.integers(0, h))
            mask[y:y + 3, x:x + 3] = 255
            rects.append((x, y, min(x + 3, w), min(y + 3, h)))
        image = mask ^ 0x5A
        for t in slice_image_and_mask(image, mask, plan):
            crop = np.zeros((tile, tile), np.uint8)
            part = mask[t.y:t.y + tile, t.x:t.x + tile]
            crop[:part.shape[0], :part.shape[1]] = part
            assert np.array_equal(t.mask, crop)
            assert np.array_equal(t.image[:part.shape[0], :part.shape[1]], part ^ 0x5A)
            # fake iff some drawn rectangle overlaps the tile
            hit = any(x0 < t.x + tile and t.x < x1 and y0 < t.y + tile and t.y < y1 for x0, y0, x1, y1 in rects)
            assert t.label == int(hit)


# 6. IFF plan determinism and balance

@criterion(6, "epoch plans are balanced, duplicate-free and byte-reproducible")
def test_c06_plans(tmp_path):
    rng = random.Random(6)
    for i in range(100):
        domains = rng.sample(list(DomainTag), rng.randint(1, 4))
        pools = {d: [f"{d.value}/{k}" for k in range(rng.randint(1, 300))] for d in domains}
        size = rng.choice([None, None, rng.randint(1, 400)])
        seed, epoch = rng.getrandbits(64), rng.randint(0, 1000)
        plan = iff_epoch_plan(pools, size, seed=seed, epoch=epoch)
        assert {len(v) for v in plan.draws.values()} == {plan.epoch_size}
        for d, ids in plan.draws.items():
            if len(pools[d]) >= plan.epoch_size:
                assert len(set(ids)) == len(ids)
        a = plan.write(tmp_path / f"a{i}.jsonl").read_bytes()
        b = iff_epoch_plan(pools, size, seed=seed, epoch=epoch).write(tmp_path / f"b{i}.jsonl").read_bytes()
        assert a == b


# 7. worker-count independence

@criterion(7, "RunResult bytes identical for workers 1, 2, 8")
def test_c07_worker_independence(tmp_path):
    manifest, preds = pixel_dataset(tmp_path / "data", 500, seed=7)
    spec = ProtocolSpec("fx", (), (EvalGroup("all", (("synth", SplitTag.TEST),)),))
    outputs = []
    for workers in (1, 2, 8):
        resolved = resolve_protocol(spec, {"synth": manifest}, with_train=False)
        res = evaluate_run(resolved, {"all": preds}, "both", workers=workers,
                           roots={"synth": str(tmp_path / "data")}, fingerprint="c7")
        outputs.append(res.write(tmp_path / f"w{workers}.json").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


# 8. DCT correctness

@criterion(8, "8x8 DCT: DC-only constants, Parseval, inverse identity")
def test_c08_dct():
    rng = np.random.default_rng(8)
    for c in (0.0, 1.0, -3.25, 255.0):
        X = block_dct(np.full((8, 8), c))[0, 0]
        assert abs(X[0, 0] - 8 * c) <= 1e-9
        assert np.abs(X.ravel()[1:]).max() <= 1e-9
    worst_pars, worst_inv = 0.0, 0.0
    blocks = rng.uniform(-255, 255, (1000, 8, 8))
    for b in blocks:
        X = block_dct(b)
        energy = math.fsum((b ** 2).ravel())
        # relative: the energy of a 255-scale block is ~1e6
        worst_pars = max(worst_pars, abs(energy - math.fsum((X ** 2).ravel())) / energy)
        worst_inv = max(worst_inv, float(np.abs(inverse_block_dct(X) - b).max()))
    assert worst_pars <= 1e-9, worst_pars
    assert worst_inv <= 1e-9, worst_inv
    return f"Parseval rel. err {worst_pars:.1e}, inverse |diff| {worst_inv:.1e}"


# 9. frame-index contract

@criterion(9, "frame indices: fixtures, monotone, endpoint-anchored")
def test_c09_frames():
    assert frame_indices(32) == list(range(32))
    assert frame_indices(63) == list(range(0, 63, 2))
    rng = random.Random(9)
    for _ in range(1000):
        t, k = rng.randint(2, 100000), rng.randint(2, 256)
        idx = frame_indices(t, k)
        assert len(idx) == k and idx[0] == 0 and idx[-1] == t - 1
        assert all(a <= b for a, b in zip(idx, idx[1:]))
        assert all(0 <= i < t for i in idx)


# 10. pixel-level throughput

@pytest.fixture(scope="module")
def throughput_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("throughput")
    rng = np.random.default_rng(10)
    records, preds = [], []
    for i in range(1000):
        sid = f"p{i:04d}"
        gt = np.zeros((512, 512), np.uint8)
        x, y = rng.integers(0, 384, 2)
        gt[y:y + 128, x:x + 128] = 255
        pred = rng.integers(0, 256, (512, 512), dtype=np.uint8)
        save_png(root / "gt" / f"{sid}.png", gt)
        save_png(root / "pred" / f"{sid}.png", pred)
        records.append(make_sample(sid, f"img/{sid}.png", 1, DomainTag.IMDL, "tp", SplitTag.TEST, f"gt/{sid}.png"))
        preds.append(PredictionRecord(sid, 0.5, str(root / "pred" / f"{sid}.png")))
    return root, DatasetManifest.from_records("tp", DomainTag.IMDL, records), preds


@pytest.mark.slow
@criterion(10, "1000 512x512 pixel pairs: <= 20 s at 8 workers, >= 3x over 1 worker")
def test_c10_throughput(throughput_data):
    root, manifest, preds = throughput_data
    spec = ProtocolSpec("tp", (), (EvalGroup("all", (("tp", SplitTag.TEST),)),))
    resolved = resolve_protocol(spec, {"tp": manifest}, with_train=False)
    times, outs = {}, {}
    for workers in (1, 8):
        t0 = time.perf_counter()
        res = evaluate_run(resolved, {"all": preds}, "pixel", workers=workers, roots={"tp": str(root)})
        times[workers] = time.perf_counter() - t0
        outs[workers] = res.dumps()
    assert outs[1] == outs[8]
    speedup = times[1] / times[8]
    summary = (f"workers=1 {times[1]:.2f}s, workers=8 {times[8]:.2f}s, speedup {speedup:.2f}x "
               f"on {os.cpu_count()} CPU(s)")
    assert times[8] <= 20.0, summary
    assert speedup >= 3.0, summary
    return summary
