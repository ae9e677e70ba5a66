import json
import random

import numpy as np
import pytest
import yaml
from PIL import Image

from conftest import save_png
from forensic_bench.cli import main
from forensic_bench.core import DatasetManifest, PredictionRecord, write_predictions


def _write_cfg(tmp_path, doc):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def _paired(root, n_real=2, n_fake=2, size=(24, 24), masks=True, seed=0):
    rng = np.random.default_rng(seed)
    for i in range(n_real):
        save_png(root / "real" / f"r{i}.png", rng.integers(0, 256, size + (3,)).astype(np.uint8))
    for i in range(n_fake):
        save_png(root / "fake" / f"f{i}.png", rng.integers(0, 256, size + (3,)).astype(np.uint8))
        if masks:
            m = np.zeros(size, np.uint8)
            m[: size[0] // 3, : size[1] // 3] = 255
            save_png(root / "masks" / f"f{i}_mask.png", m)


def _dataset(name, root="data", domain="imdl", splits=("test",), **extra):
    return {"name": name, "domain": domain, "root": root, "splits": list(splits),
            "layout": {"kind": "paired_dirs", "real_dir": "real", "fake_dir": "fake", "mask_dir": "masks"}, **extra}


def test_ingest_ok_and_idempotent(tmp_path, capsys):
    _paired(tmp_path / "data")
    cfg = _write_cfg(tmp_path, {"datasets": [_dataset("toy")], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 0
    manifest = tmp_path / "out" / "manifests" / "toy.jsonl"
    first = manifest.read_bytes()
    assert main(["ingest", "--config", cfg]) == 0
    assert manifest.read_bytes() == first
    assert "validation clean" in capsys.readouterr().out


def test_ingest_missing_fake_dir(tmp_path, capsys):
    save_png(tmp_path / "data" / "real" / "r.png", np.zeros((4, 4), np.uint8))
    cfg = _write_cfg(tmp_path, {"datasets": [_dataset("toy")], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 2
    assert str(tmp_path / "data" / "fake") in capsys.readouterr().err


def test_ingest_reports_validation_issues(tmp_path, capsys):
    _paired(tmp_path / "data", n_fake=0)
    save_png(tmp_path / "data" / "masks" / "r0_mask.png", np.full((24, 24), 255, np.uint8))
    (tmp_path / "data" / "fake").mkdir()
    cfg = _write_cfg(tmp_path, {"datasets": [_dataset("toy")], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 2
    assert "LabelMaskContradiction" in capsys.readouterr().out
    assert (tmp_path / "out" / "manifests" / "toy.jsonl").is_file()


def test_unknown_key_exit_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"datasets": [], "plann": {}})
    assert main(["ingest", "--config", cfg]) == 2
    assert "plann" in capsys.readouterr().err


def test_slice_tiles_and_labels(tmp_path):
    _paired(tmp_path / "data", n_real=1, n_fake=2, size=(1024, 1024))
    cfg = _write_cfg(tmp_path, {"datasets": [_dataset("doc", tile=512)], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 0
    assert main(["slice", "--config", cfg]) == 0
    out = tmp_path / "out"
    sliced = DatasetManifest.read(out / "manifests" / "doc.sliced.jsonl")
    assert len(sliced) == 12
    # masks cover the top-left third: only the top-left tile of each fake is fake
    assert sorted(r.id for r in sliced.records if r.label) == ["fake/f0_x0_y0", "fake/f1_x0_y0"]
    before = (out / "manifests" / "doc.sliced.jsonl").read_bytes()
    assert main(["slice", "--config", cfg]) == 0
    assert (out / "manifests" / "doc.sliced.jsonl").read_bytes() == before


def test_slice_labels_match_mask_recomputation(tmp_path):
    rng = random.Random(4)
    root = tmp_path / "data"
    for i in range(10):
        w, h = rng.randint(40, 130), rng.randint(40, 130)
        save_png(root / "fake" / f"f{i}.png", np.zeros((h, w), np.uint8))
        m = np.zeros((h, w), np.uint8)
        x, y = rng.randrange(w), rng.randrange(h)
        m[y:y + rng.randint(1, 5), x:x + rng.randint(1, 5)] = 255
        save_png(root / "masks" / f"f{i}_mask.png", m)
    (root / "real").mkdir()
    cfg = _write_cfg(tmp_path, {"datasets": [_dataset("d", tile=32)], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 0
    assert main(["slice", "--config", cfg, "--workers", "2"]) == 0
    tiles = tmp_path / "out" / "tiles" / "d"
    sliced = DatasetManifest.read(tmp_path / "out" / "manifests" / "d.sliced.jsonl")
    assert any(r.label for r in sliced.records) and any(not r.label for r in sliced.records)
    for r in sliced.records:
        assert r.label == int((np.asarray(Image.open(tiles / r.mask_ref)) > 127).any())


def test_slice_missing_mask_exit_2(tmp_path):
    _paired(tmp_path / "data", n_real=0, n_fake=1)
    (tmp_path / "data" / "real").mkdir()
    index = "image,label,mask\nfake/f0.png,1,masks/f0_mask.png\n"
    (tmp_path / "data" / "index.csv").write_text(index)
    ds = {"name": "d", "domain": "document", "root": "data", "tile": 16,
          "layout": {"kind": "flat_with_index", "index_file": "index.csv"}}
    cfg = _write_cfg(tmp_path, {"datasets": [ds], "out": "out"})
    assert main(["ingest", "--config", cfg]) == 0
    (tmp_path / "data" / "masks" / "f0_mask.png").unlink()
    assert main(["slice", "--config", cfg]) == 2


def _pools(tmp_path, sizes):
    datasets = []
    for dom, n in zip(("deepfake", "imdl", "aigc", "document"), sizes):
        root = tmp_path / dom
        (root / "fake").mkdir(parents=True)
        for i in range(n):
            save_png(root / "real" / f"{i}.png", np.zeros((4, 4), np.uint8))
        ds = _dataset(dom, root=dom, domain=dom, splits=("train",))
        ds["layout"].pop("mask_dir")
        datasets.append(ds)
    return _write_cfg(tmp_path, {"datasets": datasets, "out": "out", "seed": 7})


def test_plan(tmp_path):
    cfg = _pools(tmp_path, [4, 6, 8, 10])
    assert main(["ingest", "--config", cfg]) == 0
    assert main(["plan", "--config", cfg, "--epochs", "2"]) == 0
    plans = sorted((tmp_path / "out" / "plans").iterdir())
    assert [p.name for p in plans] == ["epoch_000.jsonl", "epoch_001.jsonl"]
    first = [p.read_bytes() for p in plans]
    lines = first[0].decode().splitlines()
    assert json.loads(lines[0]) == {"seed": 7, "epoch": 0, "epoch_size": 4}
    assert len(lines) - 1 == 16
    assert main(["plan", "--config", cfg, "--epochs", "2"]) == 0
    assert [p.read_bytes() for p in plans] == first


def test_plan_empty_domain_exit_2(tmp_path):
    cfg = _pools(tmp_path, [4, 0, 8, 10])
    main(["ingest", "--config", cfg])
    assert main(["plan", "--config", cfg, "--epochs", "1"]) == 2


def _image_run(tmp_path, scores=None, extra=None):
    _paired(tmp_path / "data", n_real=3, n_fake=3, masks=False)
    protocol = {"name": "fx", "eval_groups": [{"name": "A", "refs": [["toy", "test"]]},
                                              {"name": "B", "refs": [["toy", "test"]]}],
                "aggregates": [{"name": "Average", "groups": ["A", "B"]}]}
    ds = _dataset("toy")
    ds["layout"].pop("mask_dir")
    doc = {"datasets": [ds], "protocol": protocol, "out": "out", "name": "perfect",
           "metrics": {"select": ["image.AUC", "image.F1", "image.ACC"]},
           "predictions": {"files": {"A": "preds.jsonl", "B": "preds.jsonl"}}, **(extra or {})}
    cfg = _write_cfg(tmp_path, doc)
    assert main(["ingest", "--config", cfg]) == 0
    m = DatasetManifest.read(tmp_path / "out" / "manifests" / "toy.jsonl")
    write_predictions([PredictionRecord(r.id, float(r.label)) for r in m.records], tmp_path / "preds.jsonl")
    return cfg


def test_eval_and_report_perfect(tmp_path):
    cfg = _image_run(tmp_path)
    assert main(["eval", "--config", cfg]) == 0
    result = tmp_path / "out" / "results" / "perfect.json"
    assert result.is_file()
    assert main(["report", "--config", cfg]) == 0
    for metric in ("image-AUC", "image-F1", "image-ACC"):
        md = (tmp_path / "out" / "report" / f"fx.{metric}.md").read_text().splitlines()[-1]
        assert md == "| perfect | 1.0000 | 1.0000 | 1.0000 |"
    before = result.read_bytes()
    assert main(["eval", "--config", cfg, "--workers", "2"]) == 0
    assert result.read_bytes() == before


def test_eval_failure_names_group(tmp_path, capsys):
    cfg = _image_run(tmp_path)
    (tmp_path / "other.jsonl").write_text('{"id": "fake/f0", "score": 0.4}\n')
    doc = yaml.safe_load(open(cfg))
    doc["predictions"]["files"]["B"] = "other.jsonl"
    cfg = _write_cfg(tmp_path, doc)
    assert main(["eval", "--config", cfg]) == 3
    err = capsys.readouterr().err
    assert "group B" in err and "group A" not in err


def test_eval_via_exec_model(tmp_path):
    import sys
    from pathlib import Path
    stub = Path(__file__).resolve().parents[1] / "scripts" / "stub_model.py"
    cfg = _image_run(tmp_path)
    doc = yaml.safe_load(open(cfg))
    doc["predictions"] = {"exec": {"command": f"{sys.executable} {stub}", "batch": 2, "timeout": 20}}
    cfg = _write_cfg(tmp_path, doc)
    assert main(["eval", "--config", cfg]) == 0


def test_unknown_protocol_exit_2(tmp_path):
    cfg = _write_cfg(tmp_path, {"protocol": "tablefour"})
    assert main(["eval", "--config", cfg]) == 2


def test_report_average_d_from_reference_values(tmp_path):
    groups = [{"name": g, "refs": [g]} for g in ("DocTamperTest", "DocTamperFCD", "DocTamperSCD")]
    protocol = {"name": "doc_d", "eval_groups": groups, "metric": "pixel.F1",
                "aggregates": [{"name": "Average_D", "groups": [g["name"] for g in groups]}]}
    cfg = _write_cfg(tmp_path, {"protocol": protocol, "out": "out"})
    res = {"protocol": "doc_d", "run": "DTD", "groups": [
        {"name": g["name"], "n_items": 1, "n_fake": 1, "pixel": {"F1": v}}
        for g, v in zip(groups, (0.6856, 0.7392, 0.8031))]}
    path = tmp_path / "DTD.json"
    path.write_text(json.dumps(res))
    assert main(["report", "--config", cfg, str(path)]) == 0
    md = (tmp_path / "out" / "report" / "doc_d.pixel-F1.md").read_text()
    assert md.splitlines()[-1] == "| DTD | 0.6856 | 0.7392 | 0.8031 | 0.7426 |"


def test_run_end_to_end(tmp_path):
    cfg = _image_run(tmp_path)
    assert main(["run", "--config", cfg]) == 0
    assert (tmp_path / "out" / "report" / "fx.image-AUC.csv").is_file()


def test_extract(tmp_path, capsys, caplog):
    save_png(tmp_path / "flat.png", np.full((16, 24), 90, np.uint8))
    out = tmp_path / "sobel.npy"
    assert main(["extract", str(tmp_path / "flat.png"), "-e", "sobel", "-o", str(out)]) == 0
    assert not np.load(out).any()
    save_png(tmp_path / "noise.png", np.random.default_rng(0).integers(0, 256, (16, 24)).astype(np.uint8))
    assert main(["extract", str(tmp_path / "noise.png"), "-e", "dct", "--out", str(tmp_path)]) == 0
    assert np.load(tmp_path / "features" / "noise.dct.npy").shape == (2, 3, 8, 8)
    assert "parseval" in capsys.readouterr().out
    assert main(["extract", str(tmp_path / "noise.png"), "-e", "bayar-demo", "--out", str(tmp_path)]) == 0
    k = np.load(tmp_path / "features" / "noise.bayar-kernel.npy")
    assert k[2, 2] == -1.0


def test_extract_fph_and_unknown(tmp_path, capsys):
    save_png(tmp_path / "a.png", np.zeros((8, 8), np.uint8))
    assert main(["extract", str(tmp_path / "a.png"), "-e", "fph"]) == 2
    assert "fph is declaration-only" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["extract", str(tmp_path / "a.png"), "-e", "srm"])
    assert exc.value.code == 2
