"""Canonical report serialization: locale-free CSV and stable-key-order JSON.

Reports must be byte-identical for identical (config, seed) regardless of
worker count or transport, so every formatting choice here is fixed: repr
floats (shortest round-trip), '.' decimal, ',' separator, '\n' line ends,
sorted JSON keys, UTF-8.
"""

from __future__ import annotations

import json
from typing import Sequence

from .config import FORMAT_VERSION


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def report_document(mode: str, resolved_config: dict, results: dict) -> dict:
    """The JSON report skeleton every mode emits. The resolved config never
    includes the worker count: results are worker-independent by contract."""
    return {
        "format_version": FORMAT_VERSION,
        "mode": mode,
        "config": resolved_config,
        "results": results,
    }
