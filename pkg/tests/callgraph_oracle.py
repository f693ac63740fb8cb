"""Brute-force call-graph oracle, independent of the package's scanner.

Re-derives definitions and call expressions from raw source with a
character-level pass and regex identifier matching, then pairs every call
with every same-name, arity-compatible definition. Quadratic and slow is
fine; it exists to disagree with rfc_audit.cmodel when one of them is wrong.
"""

from __future__ import annotations

import re
from pathlib import Path

IDENT_CALL = re.compile(r"[A-Za-z_]\w*(?=\s*\()")

SKIP_WORDS = {
    "if", "else", "for", "while", "do", "switch", "case", "default",
    "return", "goto", "break", "continue", "sizeof", "typeof",
    "_Alignof", "_Alignas", "_Static_assert", "_Generic", "defined",
    "asm", "__asm__", "__attribute__", "__typeof__", "__extension__",
}


def blank_noise(src: str) -> str:
    """Same-length text with comments, string/char literals, and preprocessor
    lines replaced by spaces (newlines kept so offsets survive)."""
    out = list(src)
    i, n = 0, len(src)
    at_line_start = True

    def blank(a: int, b: int) -> None:
        for k in range(a, min(b, n)):
            if out[k] != "\n":
                out[k] = " "

    while i < n:
        c = src[i]
        if c == "\n":
            at_line_start = True
            i += 1
            continue
        if c == "/" and src.startswith("//", i):
            j = src.find("\n", i)
            j = n if j < 0 else j
            blank(i, j)
            i = j
            continue
        if c == "/" and src.startswith("/*", i):
            j = src.find("*/", i + 2)
            j = n if j < 0 else j + 2
            blank(i, j)
            i = j
            continue
        if c == "#" and at_line_start:
            j = i
            while j < n:
                k = src.find("\n", j)
                if k < 0:
                    j = n
                    break
                if src[k - 1] == "\\":
                    j = k + 1
                else:
                    j = k
                    break
            blank(i, j)
            i = j
            continue
        if c in "\"'":
            quote = c
            j = i + 1
            while j < n:
                if src[j] == "\\":
                    j += 2
                    continue
                if src[j] == quote:
                    j += 1
                    break
                j += 1
            blank(i + 1, j - 1)  # keep the quotes so literal arguments stay countable
            i = j
            at_line_start = False
            continue
        if c not in " \t\r\v\f":
            at_line_start = False
        i += 1
    return "".join(out)


def _close_paren(text: str, lparen: int) -> int:
    depth = 0
    for k in range(lparen, len(text)):
        if text[k] == "(":
            depth += 1
        elif text[k] == ")":
            depth -= 1
            if depth == 0:
                return k
    return -1


def _split_args(text: str, lparen: int, rparen: int) -> list[str]:
    parts, depth, cur = [], 0, []
    for k in range(lparen + 1, rparen):
        ch = text[k]
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur)
    if tail.strip() or parts:
        parts.append(tail)
    return parts


def _brace_depths(text: str) -> list[int]:
    depths = [0] * (len(text) + 1)
    d = 0
    for k, ch in enumerate(text):
        depths[k] = d
        if ch == "{":
            d += 1
        elif ch == "}":
            d = max(0, d - 1)
    depths[len(text)] = d
    return depths


def oracle_file(path: str, src: str):
    """(definitions, calls) for one file.

    definitions: dicts with name, arity, variadic, body range.
    calls: dicts with caller name/start, callee, arg_count, member flag.
    """
    text = blank_noise(src)
    depths = _brace_depths(text)
    defs = []
    for m in IDENT_CALL.finditer(text):
        name = m.group(0)
        if name in SKIP_WORDS:
            continue
        lp = text.index("(", m.end())
        rp = _close_paren(text, lp)
        if rp < 0:
            continue
        after = rp + 1
        while after < len(text) and text[after] in " \t\r\n\v\f":
            after += 1
        if after >= len(text) or text[after] != "{":
            continue
        if depths[m.start()] != 0:
            continue
        # skip when inside parens at top level (function-pointer declarators)
        prefix = text[:m.start()]
        if prefix.count("(") != prefix.count(")"):
            continue
        params = [p.strip() for p in _split_args(text, lp, rp)]
        variadic = any(p == "..." for p in params)
        fixed = [p for p in params if p and p != "..."]
        if len(fixed) == 1 and fixed[0] == "void":
            fixed = []
        body_close = lp
        d = 0
        for k in range(after, len(text)):
            if text[k] == "{":
                d += 1
            elif text[k] == "}":
                d -= 1
                if d == 0:
                    body_close = k
                    break
        defs.append(
            {
                "path": path,
                "name": name,
                "arity": len(fixed),
                "variadic": variadic,
                "body": (after, body_close + 1),
                "start": m.start(),
            }
        )

    calls = []
    for d in defs:
        lo, hi = d["body"]
        for m in IDENT_CALL.finditer(text, lo + 1, hi - 1):
            name = m.group(0)
            if name in SKIP_WORDS:
                continue
            lp = text.index("(", m.end())
            if lp >= hi:
                continue
            rp = _close_paren(text, lp)
            if rp < 0:
                continue
            back = m.start() - 1
            while back >= 0 and text[back] in " \t\r\n":
                back -= 1
            member = back >= 0 and (
                text[back] == "." or (text[back] == ">" and back > 0 and text[back - 1] == "-")
            )
            calls.append(
                {
                    "path": path,
                    "caller": d["name"],
                    "caller_start": d["start"],
                    "callee": name,
                    "arg_count": len(_split_args(text, lp, rp)),
                    "member": member,
                    "start": m.start(),
                }
            )
    return defs, calls


def oracle_edges(root: Path):
    """Multiset of (caller name, call start, callee, arg count, candidate key set)
    plus the transposed caller view, across all .c/.h files under root."""
    all_defs, all_calls = [], []
    for p in sorted(root.rglob("*")):
        if p.suffix not in (".c", ".h") or not p.is_file():
            continue
        rel = p.relative_to(root).as_posix()
        d, c = oracle_file(rel, p.read_bytes().decode("latin-1"))
        all_defs.extend(d)
        all_calls.extend(c)

    def def_key(d):
        return (d["path"], d["name"], d["start"])

    edges = []
    reverse: dict[tuple, list] = {def_key(d): [] for d in all_defs}
    for call in all_calls:
        if call["member"]:
            cands = []
        else:
            cands = [
                def_key(d)
                for d in all_defs
                if d["name"] == call["callee"]
                and (
                    d["arity"] == call["arg_count"]
                    or (d["variadic"] and call["arg_count"] >= d["arity"])
                )
            ]
        call_key = (call["path"], call["start"], call["callee"], call["arg_count"])
        edges.append((call_key, tuple(sorted(cands))))
        for ck in cands:
            reverse[ck].append(call_key)
    return all_defs, edges, {k: tuple(sorted(v)) for k, v in reverse.items()}
