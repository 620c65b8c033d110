"""Diagnostic reports and deterministic CSV/JSON emission."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np


def _plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


@dataclass
class DiagnosticReport:
    """Named result bundle: scalar/series payload, provenance and an optional verdict."""

    name: str
    payload: dict = field(default_factory=dict)
    module: str = ""
    anchor: str = ""
    passed: bool | None = None
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, key):
        return self.payload[key]

    def to_dict(self) -> dict:
        return _plain(
            {
                "name": self.name,
                "payload": self.payload,
                "provenance": {"module": self.module, "anchor": self.anchor},
                "passed": self.passed,
                "notes": list(self.notes),
            }
        )


def dumps_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_bytes(dumps_json(obj).encode("ascii"))


def format_number(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    lines = [",".join(header)]
    lines += [",".join(format_number(v) for v in row) for row in rows]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))
