"""Structured-output protocol: replies must carry one fenced, schema-checked
JSON block. Parsing is lenient about the fence label, strict about the JSON."""

from __future__ import annotations

import json
import re

FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

FORMAT_REMINDER = (
    "Your previous reply could not be parsed. Reply again with exactly one "
    "fenced JSON block (```json ... ```) matching the requested schema, and "
    "nothing else that looks like a fence."
)


def extract_json_block(text: str) -> dict | None:
    """The first well-formed fenced JSON object in the reply, or None."""
    for match in FENCE_RE.finditer(text):
        try:
            data = json.loads(match.group(1))
        except ValueError:
            continue
        if isinstance(data, dict):
            return data
    return None
