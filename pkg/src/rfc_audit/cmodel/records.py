"""Entity records extracted from a subject C repository.

All spans are byte offsets into the original file; text fields are exact
slices of those bytes (files are decoded latin-1 so offsets and characters
map one-to-one). Records are frozen: a built model is immutable and safe to
share across concurrent readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class SourceUnit:
    path: str  # repository-relative, posix separators
    language: str
    content_hash: str
    byte_length: int


@dataclass(frozen=True)
class FunctionRecord:
    id: str  # "<path>::<name>@<start byte>"
    path: str
    name: str
    arity: int  # fixed parameters only; variadics excluded
    is_variadic: bool
    signature: str
    body_span: tuple[int, int]  # full definition, declaration through closing brace
    body_text: str
    is_static: bool


@dataclass(frozen=True)
class TypeRecord:
    name: str
    kind: str  # struct | union | enum | typedef
    definition_text: str
    span: tuple[int, int]
    path: str


@dataclass(frozen=True)
class MacroRecord:
    name: str
    kind: str  # always "macro"
    definition_text: str
    span: tuple[int, int]
    path: str


@dataclass(frozen=True)
class CallSite:
    id: str  # "<path>@<start byte>"
    caller_id: str
    callee_name: str
    arg_count: int
    span: tuple[int, int]
    through_member: bool  # call via '.' or '->': a function-pointer call, never resolved


@dataclass(frozen=True)
class CallGraph:
    """Name+arity edges: call site id -> candidate function ids, plus the exact transpose."""

    edges: dict[str, tuple[str, ...]]
    reverse: dict[str, tuple[str, ...]]  # function id -> call site ids targeting it


@dataclass(frozen=True)
class ScanDiagnostic:
    path: str
    message: str


@dataclass(frozen=True)
class CodebaseModel:
    root: str  # absolute path of the scanned root
    root_label: str
    units: tuple[SourceUnit, ...]
    functions: tuple[FunctionRecord, ...]
    types: tuple[TypeRecord, ...]
    macros: tuple[MacroRecord, ...]
    call_sites: tuple[CallSite, ...]
    call_graph: CallGraph
    diagnostics: tuple[ScanDiagnostic, ...]
    _functions_by_id: dict[str, FunctionRecord] = field(repr=False, default_factory=dict)
    _sites_by_id: dict[str, CallSite] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_functions_by_id", {f.id: f for f in self.functions})
        object.__setattr__(self, "_sites_by_id", {s.id: s for s in self.call_sites})

    def function(self, fun_id: str) -> FunctionRecord:
        return self._functions_by_id[fun_id]

    def has_function(self, fun_id: str) -> bool:
        return fun_id in self._functions_by_id

    def site(self, site_id: str) -> CallSite:
        return self._sites_by_id[site_id]

    def functions_in(self, path: str) -> list[FunctionRecord]:
        return [f for f in self.functions if f.path == path]

    def sites_of(self, fun_id: str) -> list[CallSite]:
        return [s for s in self.call_sites if s.caller_id == fun_id]
