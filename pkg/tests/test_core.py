import pytest
from hypothesis import given, strategies as st

from forensic_bench.core import (
    DatasetManifest,
    DomainTag,
    PredictionRecord,
    SampleRecord,
    SplitTag,
    check_score,
    make_sample,
)
from forensic_bench.errors import EmptyId, InvalidLabel, ManifestError, ScoreOutOfRange


def _rec(i, label=0, mask=None, split=SplitTag.TEST):
    return make_sample(f"s{i}", f"img/s{i}.png", label, DomainTag.IMDL, "toy", split, mask)


def test_make_sample_validates():
    with pytest.raises(InvalidLabel):
        make_sample("a", "a.png", 2, DomainTag.IMDL, "d", SplitTag.TEST)
    with pytest.raises(InvalidLabel):
        make_sample("a", "a.png", True, DomainTag.IMDL, "d", SplitTag.TEST)
    with pytest.raises(EmptyId):
        make_sample("  ", "a.png", 0, DomainTag.IMDL, "d", SplitTag.TEST)
    with pytest.raises(ManifestError):
        make_sample("a", "/abs/a.png", 0, DomainTag.IMDL, "d", SplitTag.TEST)


def test_manifest_round_trip_is_byte_identical():
    m = DatasetManifest.from_records("toy", DomainTag.IMDL, [_rec(0), _rec(1, 1, "m/s1.png")])
    text = m.dumps()
    again = DatasetManifest.loads(text)
    assert again == m
    assert again.dumps() == text
    assert (m.real_count, m.fake_count) == (1, 1)
    assert m.annotation == {"label", "mask"}


def test_manifest_rejects_bad_counts():
    r = _rec(0)
    with pytest.raises(ManifestError):
        DatasetManifest("toy", DomainTag.IMDL, (r,), 0, 1, frozenset({"label"}))


def test_record_rejects_unknown_keys():
    d = _rec(0).to_dict()
    d["extra"] = 1
    with pytest.raises(ManifestError):
        SampleRecord.from_dict(d)


def test_by_split():
    m = DatasetManifest.from_records("toy", DomainTag.IMDL, [_rec(0), _rec(1, split=SplitTag.TRAIN)])
    assert [r.id for r in m.by_split(SplitTag.TRAIN)] == ["s1"]
    assert [r.id for r in m.by_split("test")] == ["s0"]


def test_prediction_needs_score_or_mask():
    with pytest.raises(ManifestError):
        PredictionRecord("x")
    assert PredictionRecord("x", mask_score_ref="p.png").score is None


@given(st.floats(allow_nan=True))
def test_check_score_range(v):
    if 0.0 <= v <= 1.0:
        assert check_score(v) == v
    else:
        with pytest.raises(ScoreOutOfRange):
            check_score(v)
