"""Deterministic CSV/JSON writers for experiment outputs.

CSV files carry one ``#`` header line naming the schema version, command and
seed, then a column-name line. Floats are written with ``repr`` so they
round-trip exactly. JSON files are a single indented object. Both use UTF-8
and LF line endings.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA = "ols-attention v1"

TRACE_COLUMNS = ("epoch", "mse", "rel_dist_to_ols", "l_value")
EQUIV_COLUMNS = ("trial", "n", "k", "design", "noise_var", "max_abs_diff", "rel_frobenius_diff",
                 "whitening_residual")
SHIFT_COLUMNS = ("shift_kind", "shift_param", "relative_error", "distortion_frobenius_dist_from_identity")


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def header_line(command: str, seed: int, extra: dict | None = None) -> str:
    fields = [SCHEMA, f"command={command}", f"seed={seed}"]
    fields += [f"{key}={_cell(val)}" for key, val in (extra or {}).items()]
    return "# " + ", ".join(fields)


def render_csv(command: str, seed: int, columns: Sequence[str], rows: Iterable[Sequence],
               extra: dict | None = None) -> str:
    lines = [header_line(command, seed, extra), ",".join(columns)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def trace_payload(trace) -> dict:
    return {
        "schema": SCHEMA,
        "command": "train",
        "seed": trace.seed,
        "l_star": trace.l_star,
        "config": dataclasses.asdict(trace.config),
        "records": [r._asdict() for r in trace.records],
    }


def read_csv(path: str | Path) -> tuple[str, list[dict]]:
    """Parse a file written by :func:`render_csv` into its header and rows of strings."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        columns = fh.readline().rstrip("\n").split(",")
        rows = [dict(zip(columns, line.rstrip("\n").split(","))) for line in fh if line.strip()]
    return header, rows
