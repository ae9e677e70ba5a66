import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import save_png
from forensic_bench.adapter import exec_model
from forensic_bench.core import DomainTag, SplitTag, make_sample
from forensic_bench.errors import ChildExit, ChildTimeout, ProtocolViolation

STUB = Path(__file__).resolve().parents[1] / "scripts" / "stub_model.py"


def _cmd(*flags):
    return [sys.executable, str(STUB), *flags]


@pytest.fixture
def records(tmp_path):
    recs = []
    for i in range(10):
        save_png(tmp_path / f"{i}.png", np.full((4, 4), i * 20, np.uint8))
        recs.append(make_sample(f"r{i}", f"{i}.png", i % 2, DomainTag.AIGC, "d", SplitTag.TEST))
    return recs


def test_scores_in_record_order(records, tmp_path):
    preds = exec_model(_cmd(), records, batch=3, root=tmp_path)
    assert [p.sample_id for p in preds] == [r.id for r in records]
    assert preds[5].score == pytest.approx(100 / 255)


def test_out_of_order_answers(records, tmp_path):
    preds = exec_model(_cmd("--reorder"), records, batch=4, root=tmp_path)
    assert [p.sample_id for p in preds] == [r.id for r in records]


def test_root_mapping(records, tmp_path):
    preds = exec_model(_cmd(), records, root={"d": tmp_path})
    assert preds[1].score == pytest.approx(20 / 255)


def test_crash_is_child_exit(records):
    with pytest.raises(ChildExit) as exc:
        exec_model(_cmd("--crash-after", "3"), records, batch=2)
    assert exc.value.code == 7


def test_garbage_is_protocol_violation(records):
    with pytest.raises(ProtocolViolation) as exc:
        exec_model(_cmd("--garbage-after", "2", "--score", "0.5"), records, batch=1)
    assert exc.value.line_no == 4  # ready line, two answers, then the bad line


def test_silent_child_times_out_waiting_for_ready(records):
    with pytest.raises(ChildTimeout):
        exec_model(_cmd("--no-ready", "--score", "0.5"), records, timeout=0.5)


def test_wrong_first_line(records):
    with pytest.raises(ProtocolViolation) as exc:
        exec_model([sys.executable, "-c", "print('hello', flush=True); import time; time.sleep(5)"], records, timeout=5)
    assert exc.value.line_no == 1


def test_stalled_request_times_out(records):
    with pytest.raises(ChildTimeout) as exc:
        exec_model(_cmd("--stall-on", "r4", "--score", "0.5"), records, batch=2, timeout=1.0)
    assert exc.value.sample_id == "r4"
