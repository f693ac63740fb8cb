"""Repository scanning and the name+arity call graph.

The grammar used for a file is keyed by its extension; C is the only subject
language wired up. Matching is purely syntactic: a call site pairs with every
definition sharing its callee name whose arity equals the argument count
(variadic definitions match any count >= their fixed arity). Ambiguity is
preserved — all candidates are returned and the caller decides.
"""

from __future__ import annotations

import fnmatch
from pathlib import Path

from ..errors import EmptyModelError, UnknownEntityError
from ..util import sha256_hex
from . import cscan
from .records import (
    CallGraph,
    CallSite,
    CodebaseModel,
    FunctionRecord,
    MacroRecord,
    ScanDiagnostic,
    SourceUnit,
    TypeRecord,
)

DEFAULT_INCLUDE = ("**/*.c", "**/*.h")

_GRAMMARS = {
    ".c": ("c", cscan.scan_file),
    ".h": ("c", cscan.scan_file),
}


def _matches(rel: str, patterns: tuple[str, ...]) -> bool:
    for p in patterns:
        if fnmatch.fnmatch(rel, p):
            return True
        # "**/" prefixed patterns also cover files at the repository root
        if p.startswith("**/") and fnmatch.fnmatch(rel, p[3:]):
            return True
    return False


def scan_repository(
    root: str | Path,
    include: tuple[str, ...] = DEFAULT_INCLUDE,
    exclude: tuple[str, ...] = (),
) -> CodebaseModel:
    """Parse every matched file under root into an immutable CodebaseModel.

    Unreadable files become diagnostics and the scan continues; matching zero
    files is an error. Ordering is deterministic: lexicographic by path, then
    start byte.
    """
    root = Path(root).resolve()
    if not root.is_dir():
        raise EmptyModelError(f"not a directory: {root}")

    candidates = sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix in _GRAMMARS
    )
    selected = [
        rel for rel in candidates if _matches(rel, include) and not _matches(rel, exclude)
    ]
    if not selected:
        raise EmptyModelError(f"no source files matched under {root}")

    units: list[SourceUnit] = []
    functions: list[FunctionRecord] = []
    types: list[TypeRecord] = []
    macros: list[MacroRecord] = []
    sites: list[CallSite] = []
    diagnostics: list[ScanDiagnostic] = []

    for rel in selected:
        language, grammar = _GRAMMARS[Path(rel).suffix]
        try:
            data = (root / rel).read_bytes()
        except OSError as exc:
            diagnostics.append(ScanDiagnostic(path=rel, message=f"unreadable, skipped: {exc}"))
            continue
        units.append(
            SourceUnit(
                path=rel,
                language=language,
                content_hash=sha256_hex(data),
                byte_length=len(data),
            )
        )
        # latin-1 keeps a one-to-one byte/char mapping, so spans stay byte-exact
        scanned = grammar(rel, data.decode("latin-1"))
        functions.extend(scanned.functions)
        types.extend(scanned.types)
        macros.extend(scanned.macros)
        sites.extend(scanned.call_sites)

    if not units:
        raise EmptyModelError(f"all matched files were unreadable under {root}")

    functions.sort(key=lambda f: (f.path, f.body_span[0]))
    types.sort(key=lambda t: (t.path, t.span[0]))
    macros.sort(key=lambda m: (m.path, m.span[0]))
    sites.sort(key=lambda s: (s.id.rsplit("@", 1)[0], s.span[0]))

    graph = _build_call_graph(functions, sites)
    return CodebaseModel(
        root=str(root),
        root_label=root.name,
        units=tuple(units),
        functions=tuple(functions),
        types=tuple(types),
        macros=tuple(macros),
        call_sites=tuple(sites),
        call_graph=graph,
        diagnostics=tuple(diagnostics),
    )


def _candidates_for(site: CallSite, by_name: dict[str, list[FunctionRecord]]) -> list[str]:
    if site.through_member:
        return []
    out = []
    for fn in by_name.get(site.callee_name, ()):
        if fn.arity == site.arg_count or (fn.is_variadic and site.arg_count >= fn.arity):
            out.append(fn.id)
    return out


def _build_call_graph(
    functions: list[FunctionRecord], sites: list[CallSite]
) -> CallGraph:
    by_name: dict[str, list[FunctionRecord]] = {}
    for fn in functions:
        by_name.setdefault(fn.name, []).append(fn)
    edges: dict[str, tuple[str, ...]] = {}
    reverse: dict[str, list[str]] = {fn.id: [] for fn in functions}
    for site in sites:
        cands = _candidates_for(site, by_name)
        edges[site.id] = tuple(cands)
        for fid in cands:
            reverse[fid].append(site.id)
    return CallGraph(edges=edges, reverse={k: tuple(v) for k, v in reverse.items()})


def lookup_definition(
    model: CodebaseModel, name: str
) -> list[TypeRecord | MacroRecord | FunctionRecord]:
    """Every entity whose name matches exactly; empty list when absent."""
    hits: list[tuple[str, int, TypeRecord | MacroRecord | FunctionRecord]] = []
    for fn in model.functions:
        if fn.name == name:
            hits.append((fn.path, fn.body_span[0], fn))
    for rec in model.types:
        if rec.name == name:
            hits.append((rec.path, rec.span[0], rec))
    for rec in model.macros:
        if rec.name == name:
            hits.append((rec.path, rec.span[0], rec))
    hits.sort(key=lambda h: (h[0], h[1]))
    return [h[2] for h in hits]


def resolve_callees(model: CodebaseModel, call: CallSite) -> list[FunctionRecord]:
    """All definitions matching the call by name and arity; empty means the
    callee is external to the repository (or a pointer/macro call)."""
    return [model.function(fid) for fid in model.call_graph.edges.get(call.id, ())]


def is_external_call(model: CodebaseModel, call: CallSite) -> bool:
    return not model.call_graph.edges.get(call.id, ())


def resolve_callers(
    model: CodebaseModel, fun_id: str
) -> list[tuple[FunctionRecord, CallSite]]:
    """Exact transpose of resolve_callees across the whole model."""
    if not model.has_function(fun_id):
        raise UnknownEntityError(f"unknown function id: {fun_id}")
    out = []
    for site_id in model.call_graph.reverse.get(fun_id, ()):
        site = model.site(site_id)
        out.append((model.function(site.caller_id), site))
    out.sort(key=lambda pair: (pair[1].id.rsplit("@", 1)[0], pair[1].span[0]))
    return out


def sites_at_line(model: CodebaseModel, path: str, line: int) -> list[CallSite]:
    """Call sites whose span starts on the given 1-based line of path (for CLI debug)."""
    data = None
    for unit in model.units:
        if unit.path == path:
            data = (Path(model.root) / path).read_bytes().decode("latin-1")
            break
    if data is None:
        return []
    # byte offset range of that line
    starts = [0]
    for k, ch in enumerate(data):
        if ch == "\n":
            starts.append(k + 1)
    if line < 1 or line > len(starts):
        return []
    lo = starts[line - 1]
    hi = starts[line] if line < len(starts) else len(data)
    return [s for s in model.call_sites if s.id.rsplit("@", 1)[0] == path and lo <= s.span[0] < hi]
