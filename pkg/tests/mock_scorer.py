#!/usr/bin/env python3
"""Deterministic mock external scorer speaking the NDJSON wire protocol.

Usage: mock_scorer.py MODE [ARG]

Modes:
    constant <v>     every pair scores v
    oracle <csv>     1.0 for pairs listed in the answer CSV, else 0.0
    overlap          Jaccard overlap of whitespace token sets (a real-ish scorer)
    out-of-range     returns 1.7 for every pair (protocol violation)
    length-mismatch  returns one score fewer than requested
    garbage          writes a non-JSON line
    sleep <seconds>  sleeps before answering each batch
"""

from __future__ import annotations

import csv
import json
import sys
import time


def scores_for(pairs: list[dict], mode: str, arg: str | None) -> list[float]:
    if mode == "constant":
        return [float(arg or 0.5)] * len(pairs)
    if mode == "oracle":
        with open(arg or "", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        truths = {(r[0], r[1]) for r in rows[1:] if r}
        return [1.0 if (p["source_id"], p["target_id"]) in truths else 0.0 for p in pairs]
    if mode == "overlap":
        out = []
        for p in pairs:
            a = set(p["source_text"].lower().split())
            b = set(p["target_text"].lower().split())
            out.append(len(a & b) / len(a | b) if (a | b) else 0.0)
        return out
    if mode == "out-of-range":
        return [1.7] * len(pairs)
    raise SystemExit(f"unknown mode {mode}")


def main() -> None:
    mode = sys.argv[1]
    arg = sys.argv[2] if len(sys.argv) > 2 else None
    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        pairs = request["pairs"]
        if mode == "sleep":
            time.sleep(float(arg or 1.0))
            print(json.dumps({"scores": [0.5] * len(pairs)}), flush=True)
            continue
        if mode == "garbage":
            print("this is not json", flush=True)
            continue
        if mode == "length-mismatch":
            print(json.dumps({"scores": [0.5] * (len(pairs) - 1)}), flush=True)
            continue
        print(json.dumps({"scores": scores_for(pairs, mode, arg)}), flush=True)


if __name__ == "__main__":
    main()
