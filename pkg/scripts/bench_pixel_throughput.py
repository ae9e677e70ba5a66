"""Time pixel-level evaluation of N synthetic 512x512 uint8 pred/gt pairs.

    python scripts/bench_pixel_throughput.py --pairs 1000 --workers 1 8
"""

import argparse
import os
import tempfile
import time
from pathlib import Path

import numpy as np
from PIL import Image

from forensic_bench.core import DatasetManifest, DomainTag, PredictionRecord, SplitTag, make_sample
from forensic_bench.protocols import EvalGroup, ProtocolSpec, resolve_protocol
from forensic_bench.runner import evaluate_run


def make_pairs(root: Path, n: int, size: int, seed: int):
    rng = np.random.default_rng(seed)
    (root / "gt").mkdir(parents=True)
    (root / "pred").mkdir()
    records, preds = [], []
    for i in range(n):
        sid = f"p{i:05d}"
        gt = np.zeros((size, size), np.uint8)
        x, y = rng.integers(0, size // 2, 2)
        gt[y:y + size // 4, x:x + size // 4] = 255
        Image.fromarray(gt).save(root / "gt" / f"{sid}.png", compress_level=1)
        Image.fromarray(rng.integers(0, 256, (size, size), dtype=np.uint8)).save(
            root / "pred" / f"{sid}.png", compress_level=1)
        records.append(make_sample(sid, f"img/{sid}.png", 1, DomainTag.IMDL, "bench", SplitTag.TEST, f"gt/{sid}.png"))
        preds.append(PredictionRecord(sid, 0.5, str(root / "pred" / f"{sid}.png")))
    return DatasetManifest.from_records("bench", DomainTag.IMDL, records), preds


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--workers", type=int, nargs="+", default=[1, 8])
    p.add_argument("--averaging", choices=["per-image-mean", "pooled"], default="per-image-mean")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        t0 = time.perf_counter()
        manifest, preds = make_pairs(root, args.pairs, args.size, args.seed)
        print(f"generated {args.pairs} pairs in {time.perf_counter() - t0:.1f}s ({os.cpu_count()} CPUs)")
        spec = ProtocolSpec("bench", (), (EvalGroup("all", (("bench", SplitTag.TEST),)),))
        resolved = resolve_protocol(spec, {"bench": manifest}, with_train=False)
        base, first = None, None
        for w in args.workers:
            t0 = time.perf_counter()
            res = evaluate_run(resolved, {"all": preds}, "pixel", workers=w, roots={"bench": str(root)},
                               pixel_average=args.averaging)
            dt = time.perf_counter() - t0
            base = base or dt
            first = first or res.dumps()
            same = "identical" if res.dumps() == first else "DIFFERENT"
            print(f"workers={w:<3d} {dt:7.2f}s  {args.pairs / dt:7.1f} pairs/s  speedup {base / dt:5.2f}x  "
                  f"F1={res.groups[0].metrics['pixel']['F1']:.6f} ({same})")


if __name__ == "__main__":
    main()
