"""Report envelopes, writers and the documented JSON shapes of each report."""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

TOOL_NAME = "influence-ledger"

_NUM = {"type": "number"}
_NUM_LIST = {"type": "array", "items": _NUM}
_INT_LIST = {"type": "array", "items": {"type": "integer"}}

META_SCHEMA = {
    "type": "object",
    "required": ["tool", "version", "command", "semantics", "pair_spec_digest", "timestamp"],
    "properties": {
        "tool": {"const": TOOL_NAME},
        "version": {"type": "string"},
        "command": {"type": "string"},
        "semantics": {"type": "string"},
        "pair_spec_digest": {"type": "string"},
        "timestamp": {"type": "string"},
    },
}


def _report(required: Sequence[str], properties: dict) -> dict:
    return {
        "type": "object",
        "required": ["meta", *required],
        "properties": {"meta": META_SCHEMA, **properties},
    }


INFLUENCE_SCHEMA = _report(
    ["state", "I", "exchange", "pairs_evaluated"],
    {
        "state": {"anyOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]},
        "I": _NUM_LIST,
        "I_before": {"anyOf": [{"type": "null"}, _NUM_LIST]},
        "exchange": {"anyOf": [{"type": "null"}, _NUM_LIST]},
        "pairs_evaluated": {"type": "integer", "minimum": 1},
    },
)

GEOMETRY_SCHEMA = _report(
    ["active_factors", "components", "I", "jacobian", "energy", "rigidity"],
    {
        "active_factors": _INT_LIST,
        "components": {"type": "array", "items": _INT_LIST},
        "I": _NUM_LIST,
        "jacobian": {"type": "array", "items": _NUM_LIST},
        "energy": {"type": "object", "required": ["lhs", "rhs"],
                   "properties": {"lhs": _NUM, "rhs": _NUM}},
        "rigidity": {"type": "object",
                     "required": ["zero_exchange", "componentwise_constant", "agree"],
                     "properties": {"zero_exchange": {"type": "boolean"},
                                    "componentwise_constant": {"type": "boolean"},
                                    "agree": {"type": "boolean"}}},
    },
)

ATTRIBUTION_SCHEMA = _report(
    ["semantics", "pairs", "I_tilde", "curvature"],
    {
        "semantics": {"type": "string"},
        "pairs": {"type": "array", "items": {
            "type": "object", "required": ["i", "j", "contrib", "residual"],
            "properties": {"i": {"type": "integer"}, "j": {"type": "integer"},
                           "contrib": _NUM_LIST, "residual": _NUM}}},
        "I_tilde": _NUM_LIST,
        "curvature": {"type": "object", "required": ["max_mixed", "additive"]},
    },
)

FLIP_SCHEMA = _report(
    ["events", "kendall_endpoints"],
    {
        "events": {"type": "array", "items": {
            "type": "object", "required": ["i", "j", "t"],
            "properties": {"i": {"type": "integer"}, "j": {"type": "integer"},
                           "t": {"type": "number", "minimum": 0, "maximum": 1}}}},
        "kendall_endpoints": {"type": "integer", "minimum": 0},
    },
)

_DECOMP = {"type": "object", "required": ["s", "residual_norm"],
           "properties": {"s": _NUM_LIST, "residual_norm": _NUM, "witness_cycle": _INT_LIST}}

CURL_SCHEMA = _report(
    ["curl", "factors", "total"],
    {
        "curl": {"type": "object",
                 "required": ["n_triangles", "max_abs_kappa", "max_abs_total", "worst"],
                 "properties": {"n_triangles": {"type": "integer", "minimum": 0},
                                "max_abs_kappa": _NUM_LIST,
                                "max_abs_total": _NUM,
                                "table_rows": {"type": "integer", "minimum": 0},
                                "table_truncated": {"type": "boolean"}}},
        "factors": {"type": "array", "items": _DECOMP},
        "total": _DECOMP,
    },
)

SCHEMAS = {
    "decompose": INFLUENCE_SCHEMA,
    "exchange": INFLUENCE_SCHEMA,
    "geometry": GEOMETRY_SCHEMA,
    "attribute": ATTRIBUTION_SCHEMA,
    "rankdiff": FLIP_SCHEMA,
    "curl": CURL_SCHEMA,
}


def meta(command: str, semantics: str, digest: str, version: str) -> dict[str, Any]:
    return {
        "tool": TOOL_NAME,
        "version": version,
        "command": command,
        "semantics": semantics,
        "pair_spec_digest": digest,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
