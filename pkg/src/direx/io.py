"""JSON/CSV serialization.  Bit-vectors are hex strings, first bit = MSB."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .devices import Ext
from .referee import BlockRecord, RandomnessCost, Transcript

TRANSCRIPT_FORMAT = "direx-transcript"
TRANSCRIPT_VERSION = 1


def bits_to_hex(bits) -> str:
    arr = np.asarray(bits, dtype=np.uint8)
    return np.packbits(arr).tobytes().hex()


def hex_to_bits(text: str, n: int | None = None) -> np.ndarray:
    text = text.strip().lower()
    if text.startswith("0x"):
        text = text[2:]
    if len(text) % 2:
        text += "0"
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
    if n is not None:
        if n > len(bits):
            raise ValueError(f"hex string holds {len(bits)} bits, need {n}")
        bits = bits[:n]
    return bits.astype(np.uint8)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: Path):
    return json.loads(Path(path).read_text())


def _symbol_out(s):
    return s.label if isinstance(s, Ext) else int(s)


def _symbol_in(s):
    return int(s) if isinstance(s, int) else Ext.parse(s)


def transcript_to_dict(t: Transcript, config: Mapping | None = None) -> dict:
    return {
        "format": TRANSCRIPT_FORMAT,
        "version": TRANSCRIPT_VERSION,
        "tool_version": __version__,
        "config": dict(config) if config is not None else None,
        "protocol": t.protocol,
        "params": t.params,
        "pair": t.pair_name,
        "bell_set": list(t.bell_set),
        "accepted": t.accepted,
        "first_failure": t.first_failure,
        "box_uses": t.box_uses,
        "selection_bits_drawn": t.selection_bits_drawn,
        "randomness_cost": {
            "shannon_bits": t.randomness_cost.shannon_bits,
            "raw_bits_drawn": t.randomness_cost.raw_bits_drawn,
        },
        "blocks": [
            {
                "index": rec.index,
                "is_bell": rec.is_bell,
                "x": _symbol_out(rec.x),
                "y": _symbol_out(rec.y),
                "a": bits_to_hex(rec.a),
                "b": bits_to_hex(rec.b),
                "mismatch_count": rec.mismatch_count,
                "passed": rec.passed,
            }
            for rec in t.blocks
        ],
    }


def transcript_from_dict(d: Mapping) -> Transcript:
    if d.get("format") != TRANSCRIPT_FORMAT:
        raise ValueError("not a transcript document")
    if d.get("version") != TRANSCRIPT_VERSION:
        raise ValueError(f"unsupported transcript version {d.get('version')}")
    k = d["params"]["k"]
    blocks = [
        BlockRecord(
            index=b["index"],
            is_bell=b["is_bell"],
            x=_symbol_in(b["x"]),
            y=_symbol_in(b["y"]),
            a=hex_to_bits(b["a"], k),
            b=hex_to_bits(b["b"], k),
            mismatch_count=b["mismatch_count"],
            passed=b["passed"],
        )
        for b in d["blocks"]
    ]
    cost = d["randomness_cost"]
    return Transcript(
        protocol=d["protocol"],
        params=dict(d["params"]),
        pair_name=d["pair"],
        bell_set=list(d["bell_set"]),
        blocks=blocks,
        accepted=d["accepted"],
        first_failure=d["first_failure"],
        randomness_cost=RandomnessCost(cost["shannon_bits"], cost["raw_bits_drawn"]),
        selection_bits_drawn=d.get("selection_bits_drawn", 0),
    )


def rows_to_csv(rows: Iterable[Mapping], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


BLOCK_FIELDS = ["index", "is_bell", "x", "y", "mismatch_count", "mismatch_rate", "passed"]


def transcript_blocks_csv(t: Transcript) -> str:
    rows = (
        {
            "index": rec.index,
            "is_bell": int(rec.is_bell),
            "x": _symbol_out(rec.x),
            "y": _symbol_out(rec.y),
            "mismatch_count": rec.mismatch_count,
            "mismatch_rate": rec.mismatch_count / len(rec.a) if len(rec.a) else 0.0,
            "passed": int(rec.passed),
        }
        for rec in t.blocks
    )
    return rows_to_csv(rows, BLOCK_FIELDS)
