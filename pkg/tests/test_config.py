import pytest

from forensic_bench.config import fingerprint, parse_config, resolve_workers
from forensic_bench.core import DomainTag, SplitTag
from forensic_bench.errors import ConfigError

BASE = {
    "datasets": [{"name": "toy", "domain": "imdl", "root": "data",
                  "layout": {"kind": "paired_dirs", "real_dir": "{split}/real", "fake_dir": "{split}/fake"},
                  "splits": ["train", "test"]}],
    "protocol": {"name": "p", "eval_groups": [{"name": "g", "refs": [["toy", "test"]]}]},
}


def test_parses_and_templates_splits(tmp_path):
    cfg = parse_config(BASE, tmp_path)
    ds = cfg.datasets["toy"]
    assert ds.domain is DomainTag.IMDL and ds.root == tmp_path / "data"
    assert ds.layouts[SplitTag.TRAIN].real_dir == "train/real"
    assert cfg.seed == 0 and cfg.metrics.threshold == 0.5
    assert cfg.protocol.eval_groups[0].refs == (("toy", SplitTag.TEST),)


@pytest.mark.parametrize("path,doc", [
    ("colour", {**BASE, "colour": 1}),
    ("datasets[0].layout.mask_sufix", {**BASE, "datasets": [{**BASE["datasets"][0], "layout": {
        **BASE["datasets"][0]["layout"], "mask_sufix": "_m"}}]}),
    ("metrics.thresh", {**BASE, "metrics": {"thresh": 0.3}}),
    ("protocol.eval_groups[0].ref", {**BASE, "protocol": {"name": "p", "eval_groups": [{"name": "g", "ref": []}]}}),
])
def test_unknown_keys_name_their_path(path, doc):
    with pytest.raises(ConfigError, match=path.replace("[", r"\[").replace("]", r"\]")):
        parse_config(doc)


def test_bad_values():
    with pytest.raises(ConfigError, match="domain"):
        parse_config({"datasets": [{**BASE["datasets"][0], "domain": "space"}]})
    with pytest.raises(ConfigError, match="unknown protocol"):
        parse_config({"protocol": "nope"})
    with pytest.raises(ConfigError, match="undeclared"):
        parse_config({**BASE, "protocol": {"name": "p", "eval_groups": [{"name": "g", "refs": ["other"]}]}})
    with pytest.raises(ConfigError):
        parse_config({"seed": -1})


def test_fingerprint_ignores_workers_and_out():
    assert fingerprint({**BASE, "workers": 8, "out": "x"}) == fingerprint(BASE)
    assert fingerprint({**BASE, "seed": 1}) != fingerprint(BASE)


def test_workers_precedence(monkeypatch):
    cfg = parse_config({"workers": 3})
    monkeypatch.setenv("FORENSIC_BENCH_WORKERS", "5")
    assert resolve_workers(2, cfg) == 2
    assert resolve_workers(None, cfg) == 3
    assert resolve_workers(None, parse_config({})) == 5
