"""Line-delimited JSON contract for running an external model as a child process.

The child writes ``{"ready":true}`` once it can take work, then answers each
request line ``{"id": ..., "image": ...}`` with one response line
``{"id": ..., "score": ..., "mask": ...?}`` on stdout. Responses may come
back in any order; they are matched by id. The child must flush stdout
after every line.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
import time
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .core import PredictionRecord, SampleRecord, check_score, dumps_line
from .errors import ChildExit, ChildTimeout, ProtocolViolation, ScoreOutOfRange

_EOF = object()


def _pump(stream, q: queue.Queue):
    try:
        for line in stream:
            q.put(line)
    finally:
        q.put(_EOF)


class _Child:
    def __init__(self, command, cwd=None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, cwd=cwd,
            text=True, encoding="utf-8", bufsize=1,
        )
        self.lines: queue.Queue = queue.Queue()
        self.line_no = 0
        threading.Thread(target=_pump, args=(self.proc.stdout, self.lines), daemon=True).start()

    def read(self, deadline: float):
        """Next stdout line, ``_EOF``, or None when ``deadline`` passes."""
        wait = deadline - time.monotonic()
        if wait <= 0:
            return None
        try:
            line = self.lines.get(timeout=wait)
        except queue.Empty:
            return None
        if line is not _EOF:
            self.line_no += 1
        return line

    def send(self, objs):
        try:
            for o in objs:
                self.proc.stdin.write(dumps_line(o) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise ChildExit(self.proc.wait(timeout=5), "stdin closed while sending requests") from None

    def exit_code(self):
        try:
            return self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            return None

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


def _parse_response(line: str, line_no: int, pending: dict, cwd: Optional[Path]) -> PredictionRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolViolation(line_no, f"malformed JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or "id" not in obj:
        raise ProtocolViolation(line_no, "response must be an object with an 'id' key")
    sid = obj["id"]
    if sid not in pending:
        raise ProtocolViolation(line_no, f"unexpected or repeated id {sid!r}")
    score, mask = obj.get("score"), obj.get("mask")
    try:
        score = None if score is None else check_score(score, f"response line {line_no}")
    except ScoreOutOfRange as exc:
        raise ProtocolViolation(line_no, str(exc)) from None
    if mask is not None:
        if not isinstance(mask, str):
            raise ProtocolViolation(line_no, "'mask' must be a path string")
        if cwd is not None and not os.path.isabs(mask):
            mask = str(cwd / mask)
    if score is None and mask is None:
        raise ProtocolViolation(line_no, f"response for {sid!r} carries neither score nor mask")
    return PredictionRecord(sid, score, mask)


def _image_path(r: SampleRecord, root) -> str:
    if root is None:
        return r.image_ref
    if isinstance(root, Mapping):
        root = root.get(r.dataset_name, ".")
    return str(Path(root) / r.image_ref)


def exec_model(
    command,
    records: Sequence[SampleRecord],
    batch: int = 16,
    timeout: float = 60.0,
    *,
    root=None,
    cwd=None,
) -> list[PredictionRecord]:
    """Run ``command`` and collect one prediction per record, in record order.

    At most ``batch`` requests are outstanding at once. ``timeout`` is the
    per-request limit in seconds, measured from when the request was sent;
    it also bounds the wait for the ready line. ``root`` (a path, or a
    mapping of dataset name to path) prefixes the image paths sent.
    """
    records = getattr(records, "records", records)
    if batch < 1:
        raise ValueError("batch must be >= 1")
    base = Path(cwd) if cwd is not None else Path.cwd()
    child = _Child(command, cwd=cwd)
    try:
        line = child.read(time.monotonic() + timeout)
        if line is None:
            raise ChildTimeout("<ready>", timeout)
        if line is _EOF:
            raise ChildExit(child.exit_code(), "exited before signalling ready")
        try:
            ready = json.loads(line)
        except json.JSONDecodeError:
            ready = None
        if ready != {"ready": True}:
            raise ProtocolViolation(child.line_no, 'expected {"ready":true} as the first line')

        answers: dict[str, PredictionRecord] = {}
        pending: dict[str, float] = {}  # id -> deadline
        todo = list(records)
        nxt = 0
        while nxt < len(todo) or pending:
            if nxt < len(todo) and len(pending) < batch:
                chunk = todo[nxt:nxt + batch - len(pending)]
                nxt += len(chunk)
                child.send({"id": r.id, "image": _image_path(r, root)} for r in chunk)
                now = time.monotonic()
                for r in chunk:
                    pending[r.id] = now + timeout
                continue
            first_id = min(pending, key=pending.get)
            line = child.read(pending[first_id])
            if line is None:
                raise ChildTimeout(first_id, timeout)
            if line is _EOF:
                raise ChildExit(child.exit_code(), f"{len(pending)} requests unanswered")
            if not line.strip():
                continue
            pred = _parse_response(line, child.line_no, pending, base)
            del pending[pred.sample_id]
            answers[pred.sample_id] = pred
    except BaseException:
        child.proc.kill()
        child.proc.wait()
        raise
    child.close()
    return [answers[r.id] for r in records]
