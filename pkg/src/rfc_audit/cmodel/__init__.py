"""Subject code model: scanned C entities, lookups, and the name+arity call graph."""

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
from .scan import (
    is_external_call,
    lookup_definition,
    resolve_callees,
    resolve_callers,
    scan_repository,
    sites_at_line,
)

__all__ = [
    "CallGraph",
    "CallSite",
    "CodebaseModel",
    "FunctionRecord",
    "MacroRecord",
    "ScanDiagnostic",
    "SourceUnit",
    "TypeRecord",
    "is_external_call",
    "lookup_definition",
    "resolve_callees",
    "resolve_callers",
    "scan_repository",
    "sites_at_line",
]
