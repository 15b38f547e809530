"""Deterministic report rendering.

Identical payloads must serialize to identical bytes, so this module owns
its own JSON emitter: dict keys are written in insertion order and every
float uses the fixed ``.16e`` format (17 significant digits, exact IEEE-754
round-trip). The table renderer is for humans but equally deterministic.
"""

from __future__ import annotations

import json
from typing import Any, Sequence

import numpy as np

from .serialization import format_float
from .suggestion import RoundRecord

CSV_HEADER = "round,theta_a,theta_b,alice_decision,bob_outcome,seed"


def complex_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def vector_payload(v: np.ndarray) -> list[list[float]]:
    return [complex_pair(z) for z in v]


def matrix_payload(m: np.ndarray) -> list[list[list[float]]]:
    return [vector_payload(row) for row in m]


def render_json(value: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {render_json(v, indent + 1)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            return "[" + ", ".join(_render_number(v) for v in value) + "]"
        items = [f"{pad}  {render_json(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, float)):
        return _render_number(value)
    return json.dumps(str(value))


def _render_number(v: int | float) -> str:
    if isinstance(v, int):
        return str(v)
    return format_float(float(v))


def render_table(payload: dict, indent: int = 0) -> str:
    """Aligned ``key: value`` lines, recursing into nested structures."""
    lines: list[str] = []
    pad = "  " * indent
    for key, value in payload.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            lines.append(render_table(value, indent + 1))
        elif isinstance(value, (list, tuple)):
            if value and all(isinstance(v, dict) for v in value):
                lines.append(f"{pad}{key}:")
                for i, entry in enumerate(value):
                    lines.append(f"{pad}  [{i}]")
                    lines.append(render_table(entry, indent + 2))
            else:
                lines.append(f"{pad}{key}: {_table_scalar_seq(value)}")
        else:
            lines.append(f"{pad}{key}: {_table_scalar(value)}")
    return "\n".join(lines)


def _table_scalar(v: Any) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _table_scalar_seq(seq: Sequence[Any]) -> str:
    return "[" + ", ".join(
        _table_scalar_seq(v) if isinstance(v, (list, tuple)) else _table_scalar(v)
        for v in seq
    ) + "]"


def render_signal_csv(records: Sequence[RoundRecord]) -> str:
    lines = [CSV_HEADER]
    for i, r in enumerate(records):
        lines.append(
            f"{i},{format_float(r.alice_theta)},{format_float(r.bob_theta)},"
            f"{r.alice_decision},{r.bob_outcome},{r.seed}"
        )
    return "\n".join(lines) + "\n"


def render_payload(payload: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(payload) + "\n"
    if fmt == "table":
        return render_table(payload) + "\n"
    raise ValueError(f"unsupported render format {fmt!r}")
