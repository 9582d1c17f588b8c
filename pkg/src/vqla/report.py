"""Machine-readable run reports and a deterministic JSON writer.

Floats are serialized with 17 significant digits and keys are emitted in
sorted order, so parse -> serialize round-trips byte-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA_VERSION = 1


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("JSON reports cannot carry NaN or infinity")
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad_in + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k in sorted(obj):
            if not isinstance(k, str):
                raise TypeError("JSON object keys must be strings")
            items.append(pad_in + json.dumps(k) + ": " + _encode(obj[k], indent, level + 1))
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    return _encode(obj, indent, 0) + "\n"


def json_loads(text: str):
    return json.loads(text)


@dataclass
class SolveReport:
    """Outcome of one solve/multiply run, including its verification."""

    task: str
    success: bool
    depth: int | None
    theta_min: list
    energy: float
    verification: dict
    seed: int | None = None
    config: dict = field(default_factory=dict)
    trace_summary: dict = field(default_factory=dict)
    wall_time_s: float | None = None
    message: str | None = None
    schema: int = SCHEMA_VERSION

    def to_json_dict(self) -> dict:
        return {
            "schema": self.schema,
            "task": self.task,
            "success": self.success,
            "depth": self.depth,
            "theta_min": [float(t) for t in self.theta_min],
            "energy": float(self.energy),
            "verification": self.verification,
            "seed": self.seed,
            "config": self.config,
            "trace_summary": self.trace_summary,
            "wall_time_s": self.wall_time_s,
            "message": self.message,
        }

    def dumps(self) -> str:
        return json_dumps(self.to_json_dict())
