"""Small shared helpers: hashing, canonical JSON, token estimates."""

import hashlib
import json
import os
import tempfile
from pathlib import Path


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_hex(text.encode("utf-8", errors="surrogateescape"))


def canonical_json(payload) -> str:
    """Serialize with sorted keys and fixed separators, independent of dict insertion order."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def estimate_tokens(text: str) -> int:
    """Cheap deterministic token estimate used for budgets and mock usage."""
    return max(1, len(text) // 4)


def truncate_words(text: str, cap: int) -> str:
    words = text.split()
    if len(words) <= cap:
        return text.strip()
    return " ".join(words[:cap])


def elide_middle(text: str, cap_chars: int, marker: str = "\n/* ... elided ... */\n") -> str:
    """Keep the head and tail of an oversized blob, dropping the middle."""
    if len(text) <= cap_chars:
        return text
    keep = max(1, (cap_chars - len(marker)) // 2)
    return text[:keep] + marker + text[-keep:]


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json_stable(payload) -> str:
    """Render JSON deterministically for run artifacts (diffable, byte-stable)."""
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
