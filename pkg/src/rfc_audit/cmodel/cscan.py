"""Single-file C extraction: tokenizer plus definition and call-site scanning.

This is a purely syntactic scanner, not a compiler front end. It never runs
the preprocessor: conditional-compilation branches are scanned as-is, so
duplicate definitions under #ifdef arms all surface. Function-pointer calls
through member access are recorded but flagged as unresolvable; calls through
bare dereference or array indexing are not name-shaped and are not recorded.
K&R-style definitions and local function prototypes are out of scope, and a
conditional-compilation arm with unbalanced braces will confuse the brace
tracker for the rest of the file.
"""

from __future__ import annotations

from dataclasses import dataclass

from .records import CallSite, FunctionRecord, MacroRecord, TypeRecord

# Identifiers that look like calls but never are.
NON_CALL_KEYWORDS = frozenset(
    {
        "if", "else", "for", "while", "do", "switch", "case", "default",
        "return", "goto", "break", "continue", "sizeof", "typeof",
        "_Alignof", "_Alignas", "_Static_assert", "_Generic", "defined",
        "asm", "__asm__", "__attribute__", "__typeof__", "__extension__",
    }
)

TYPE_TAG_KEYWORDS = frozenset({"struct", "union", "enum"})


@dataclass(frozen=True)
class Tok:
    kind: str  # id | num | str | char | pp | ellipsis | punct
    text: str
    start: int
    end: int


def tokenize(src: str) -> list[Tok]:
    """Lex C source into offset-carrying tokens; comments vanish, strings collapse."""
    toks: list[Tok] = []
    i = 0
    n = len(src)
    line_start = True
    while i < n:
        c = src[i]
        if c == "\n":
            line_start = True
            i += 1
            continue
        if c in " \t\r\v\f":
            i += 1
            continue
        if c == "/" and i + 1 < n and src[i + 1] == "/":
            j = src.find("\n", i)
            i = n if j < 0 else j
            continue
        if c == "/" and i + 1 < n and src[i + 1] == "*":
            j = src.find("*/", i + 2)
            i = n if j < 0 else j + 2
            continue
        if c == "#" and line_start:
            j = i
            while j < n:
                k = src.find("\n", j)
                if k < 0:
                    k = n
                    j = k
                    break
                # honor backslash continuations (tolerate CRLF)
                back = k - 1
                if back >= 0 and src[back] == "\r":
                    back -= 1
                if back >= i and src[back] == "\\":
                    j = k + 1
                else:
                    j = k
                    break
            toks.append(Tok("pp", src[i:j], i, j))
            i = j
            continue
        line_start = False
        if c == '"' or (c == "L" and i + 1 < n and src[i + 1] == '"'):
            j = i + (2 if c == "L" else 1)
            while j < n:
                if src[j] == "\\":
                    j += 2
                    continue
                if src[j] == '"':
                    j += 1
                    break
                j += 1
            toks.append(Tok("str", src[i:j], i, j))
            i = j
            continue
        if c == "'":
            j = i + 1
            while j < n:
                if src[j] == "\\":
                    j += 2
                    continue
                if src[j] == "'":
                    j += 1
                    break
                j += 1
            toks.append(Tok("char", src[i:j], i, j))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(Tok("id", src[i:j], i, j))
            i = j
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i + 1
            while j < n:
                ch = src[j]
                if ch.isalnum() or ch in "._":
                    j += 1
                elif ch in "+-" and src[j - 1] in "eEpP":
                    j += 1
                else:
                    break
            toks.append(Tok("num", src[i:j], i, j))
            i = j
            continue
        if src.startswith("...", i):
            toks.append(Tok("ellipsis", "...", i, i + 3))
            i += 3
            continue
        if src.startswith("->", i):
            toks.append(Tok("punct", "->", i, i + 2))
            i += 2
            continue
        toks.append(Tok("punct", c, i, i + 1))
        i += 1
    return toks


def _match(toks: list[Tok], i: int, open_text: str, close_text: str) -> int:
    """Index of the token closing the bracket opened at toks[i]; -1 if unbalanced."""
    depth = 0
    for k in range(i, len(toks)):
        t = toks[k]
        if t.kind != "punct":
            continue
        if t.text == open_text:
            depth += 1
        elif t.text == close_text:
            depth -= 1
            if depth == 0:
                return k
    return -1


def _param_groups(toks: list[Tok], lparen: int, rparen: int) -> list[list[Tok]]:
    """Split tokens between parens into comma-separated groups at nesting depth 0."""
    groups: list[list[Tok]] = []
    current: list[Tok] = []
    depth = 0
    for k in range(lparen + 1, rparen):
        t = toks[k]
        if t.kind == "punct" and t.text in "([{":
            depth += 1
        elif t.kind == "punct" and t.text in ")]}":
            depth -= 1
        if t.kind == "punct" and t.text == "," and depth == 0:
            groups.append(current)
            current = []
        else:
            current.append(t)
    if current or groups:
        groups.append(current)
    return groups


def _definition_arity(toks: list[Tok], lparen: int, rparen: int) -> tuple[int, bool]:
    groups = _param_groups(toks, lparen, rparen)
    if not groups:
        return 0, False
    if len(groups) == 1 and len(groups[0]) == 1 and groups[0][0].text == "void":
        return 0, False
    variadic = any(len(g) == 1 and g[0].kind == "ellipsis" for g in groups)
    fixed = sum(1 for g in groups if not (len(g) == 1 and g[0].kind == "ellipsis"))
    return fixed, variadic


def _call_arg_count(toks: list[Tok], lparen: int, rparen: int) -> int:
    groups = _param_groups(toks, lparen, rparen)
    return len([g for g in groups if g]) if groups else 0


@dataclass
class FileScan:
    functions: list[FunctionRecord]
    types: list[TypeRecord]
    macros: list[MacroRecord]
    call_sites: list[CallSite]


def _macro_from_pp(tok: Tok, path: str) -> MacroRecord | None:
    body = tok.text
    stripped = body[1:].lstrip()
    if not stripped.startswith("define"):
        return None
    rest = stripped[len("define"):]
    rest = rest.lstrip()
    j = 0
    while j < len(rest) and (rest[j].isalnum() or rest[j] == "_"):
        j += 1
    name = rest[:j]
    if not name or name[0].isdigit():
        return None
    return MacroRecord(
        name=name,
        kind="macro",
        definition_text=body,
        span=(tok.start, tok.end),
        path=path,
    )


def _scan_calls(
    toks: list[Tok], body_open: int, body_close: int, caller_id: str, path: str
) -> list[CallSite]:
    sites: list[CallSite] = []
    for k in range(body_open + 1, body_close):
        t = toks[k]
        if t.kind != "id" or t.text in NON_CALL_KEYWORDS:
            continue
        if k + 1 >= body_close or toks[k + 1].text != "(" or toks[k + 1].kind != "punct":
            continue
        rp = _match(toks, k + 1, "(", ")")
        if rp < 0 or rp > body_close:
            continue
        prev = toks[k - 1]
        member = prev.kind == "punct" and prev.text in (".", "->")
        sites.append(
            CallSite(
                id=f"{path}@{t.start}",
                caller_id=caller_id,
                callee_name=t.text,
                arg_count=_call_arg_count(toks, k + 1, rp),
                span=(t.start, toks[rp].end),
                through_member=member,
            )
        )
    return sites


def _typedef_alias_name(toks: list[Tok], start: int, semi: int) -> str | None:
    """The declared alias of a typedef: last plain identifier, or the (*name) of
    a function-pointer alias."""
    for k in range(start, semi):
        if (
            toks[k].kind == "punct"
            and toks[k].text == "("
            and k + 1 < semi
            and toks[k + 1].text == "*"
        ):
            m = k + 2
            while m < semi and toks[m].text == "*":
                m += 1
            if m < semi and toks[m].kind == "id":
                return toks[m].text
    for k in range(semi - 1, start, -1):
        if toks[k].kind == "id" and toks[k].text not in TYPE_TAG_KEYWORDS:
            return toks[k].text
    return None


def scan_file(path: str, src: str) -> FileScan:
    """Extract every function, type, macro, and call site from one C source file."""
    toks = tokenize(src)
    out = FileScan(functions=[], types=[], macros=[], call_sites=[])
    n = len(toks)
    i = 0
    depth = 0
    stmt_start = 0  # token index opening the current top-level declaration

    def end_to_semi(close_idx: int) -> int:
        """Token index of the ';' terminating a declaration, or the closer itself."""
        for k in range(close_idx + 1, n):
            if toks[k].kind == "punct" and toks[k].text == ";":
                return k
            if toks[k].kind == "punct" and toks[k].text in "({":
                break
        return close_idx

    while i < n:
        t = toks[i]
        if t.kind == "pp":
            macro = _macro_from_pp(t, path)
            if macro is not None:
                out.macros.append(macro)
            if depth == 0:
                stmt_start = i + 1
            i += 1
            continue
        if t.kind == "punct":
            if t.text == "{":
                depth += 1
            elif t.text == "}":
                depth = max(0, depth - 1)
                if depth == 0:
                    stmt_start = i + 1
            elif t.text == ";" and depth == 0:
                stmt_start = i + 1
            i += 1
            continue
        if depth != 0 or t.kind != "id":
            i += 1
            continue

        if t.text == "typedef":
            # consume through the terminating ';' outside any braces
            local = 0
            semi = -1
            for k in range(i + 1, n):
                tk = toks[k]
                if tk.kind == "punct" and tk.text == "{":
                    local += 1
                elif tk.kind == "punct" and tk.text == "}":
                    local -= 1
                elif tk.kind == "punct" and tk.text == ";" and local == 0:
                    semi = k
                    break
            if semi < 0:
                i += 1
                continue
            span = (t.start, toks[semi].end)
            text = src[span[0]:span[1]]
            # a tagged struct/union/enum body inside the typedef is its own record
            for k in range(i + 1, semi):
                if (
                    toks[k].kind == "id"
                    and toks[k].text in TYPE_TAG_KEYWORDS
                    and k + 2 < semi
                    and toks[k + 1].kind == "id"
                    and toks[k + 2].text == "{"
                ):
                    out.types.append(
                        TypeRecord(
                            name=toks[k + 1].text,
                            kind=toks[k].text,
                            definition_text=text,
                            span=span,
                            path=path,
                        )
                    )
                    break
            alias = _typedef_alias_name(toks, i + 1, semi)
            if alias:
                out.types.append(
                    TypeRecord(
                        name=alias, kind="typedef", definition_text=text, span=span, path=path
                    )
                )
            i = semi + 1
            stmt_start = i
            continue

        if t.text in TYPE_TAG_KEYWORDS:
            # tagged definition with a body: struct foo { ... } [decls] ;
            if i + 2 < n and toks[i + 1].kind == "id" and toks[i + 2].text == "{":
                close = _match(toks, i + 2, "{", "}")
                if close > 0:
                    semi = end_to_semi(close)
                    span = (t.start, toks[semi].end)
                    out.types.append(
                        TypeRecord(
                            name=toks[i + 1].text,
                            kind=t.text,
                            definition_text=src[span[0]:span[1]],
                            span=span,
                            path=path,
                        )
                    )
                    i = semi + 1
                    stmt_start = i
                    continue
            i += 1
            continue

        nxt = toks[i + 1] if i + 1 < n else None
        if nxt is not None and nxt.kind == "punct" and nxt.text == "(":
            rp = _match(toks, i + 1, "(", ")")
            after = toks[rp + 1] if 0 < rp + 1 < n else None
            if rp > 0 and after is not None and after.kind == "punct" and after.text == "{":
                body_close = _match(toks, rp + 1, "{", "}")
                if body_close > 0:
                    decl = toks[stmt_start] if stmt_start < n else t
                    arity, variadic = _definition_arity(toks, i + 1, rp)
                    span = (decl.start, toks[body_close].end)
                    fun = FunctionRecord(
                        id=f"{path}::{t.text}@{span[0]}",
                        path=path,
                        name=t.text,
                        arity=arity,
                        is_variadic=variadic,
                        signature=src[decl.start:after.start].rstrip(),
                        body_span=span,
                        body_text=src[span[0]:span[1]],
                        is_static=any(
                            toks[k].kind == "id" and toks[k].text == "static"
                            for k in range(stmt_start, i)
                        ),
                    )
                    out.functions.append(fun)
                    out.call_sites.extend(_scan_calls(toks, rp + 1, body_close, fun.id, path))
                    i = body_close + 1
                    stmt_start = i
                    continue
        i += 1

    return out
