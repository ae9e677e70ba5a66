"""Toy model speaking the line-delimited JSON worker protocol.

Scores an image by its mean intensity / 255. Flags inject the failure modes
the harness must handle: late or missing ready line, crashes, garbage,
stalls and out-of-order answers.

    python scripts/stub_model.py [--reorder] [--crash-after N] ...
"""

import argparse
import json
import select
import sys
import time

import numpy as np
from PIL import Image


def score(path: str, fixed):
    if fixed is not None:
        return fixed
    try:
        arr = np.asarray(Image.open(path), dtype=np.float64)
    except OSError:
        return 0.5
    return float(arr.mean() / 255.0)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--score", type=float, help="answer this score for every request")
    p.add_argument("--no-ready", action="store_true")
    p.add_argument("--crash-after", type=int, help="exit with code 7 after N answers")
    p.add_argument("--garbage-after", type=int, help="emit a malformed line after N answers")
    p.add_argument("--stall-on", help="never answer this id")
    p.add_argument("--delay", type=float, default=0.0, help="seconds to sleep per answer")
    p.add_argument("--reorder", action="store_true", help="answer buffered requests in reverse order")
    args = p.parse_args()

    if not args.no_ready:
        print(json.dumps({"ready": True}), flush=True)
    answered = 0
    buffer = []

    def answer(req):
        nonlocal answered
        if args.crash_after is not None and answered >= args.crash_after:
            sys.exit(7)
        if args.garbage_after is not None and answered >= args.garbage_after:
            print("this is not json", flush=True)
            return
        if req["id"] == args.stall_on:
            return
        time.sleep(args.delay)
        print(json.dumps({"id": req["id"], "score": score(req["image"], args.score)}), flush=True)
        answered += 1

    while True:
        if args.reorder and buffer:
            ready, _, _ = select.select([sys.stdin], [], [], 0.05)
            if not ready:
                for req in reversed(buffer):
                    answer(req)
                buffer.clear()
                continue
        line = sys.stdin.readline()
        if not line:
            break
        req = json.loads(line)
        if args.reorder:
            buffer.append(req)
        else:
            answer(req)
    for req in reversed(buffer):
        answer(req)


if __name__ == "__main__":
    main()
