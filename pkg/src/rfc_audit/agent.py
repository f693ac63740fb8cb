"""Retrieval-guided detection: one finite state machine run per property.

States: Localization -> Detection -> {Validation, Retrieval, concluded};
Retrieval feeds back into Detection, Validation concludes. Budgets bound every
loop: the retrieval counter strictly decreases, gathered items are capped, and
a token budget covers the whole property. Exhausting any budget concludes the
property as inconclusive rather than erroring.

The model's replies must carry a fenced JSON block; a malformed reply earns
one reprompt with a format reminder and then fails closed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .cmodel import (
    CodebaseModel,
    FunctionRecord,
    lookup_definition,
    resolve_callees,
    resolve_callers,
)
from .indexer import ROOT_ID, SemanticIndex, build_skeleton
from .llm import LlmClient, request
from .prompts import render
from .properties import SemanticProperty
from .protocol import FORMAT_REMINDER, extract_json_block
from .util import estimate_tokens

_SYSTEM = "You audit C protocol implementations against specification requirements."

# canonical state names, also used verbatim in recorded traces
LOCALIZATION = "Localization"
DETECTION = "Detection"
RETRIEVAL = "Retrieval"
VALIDATION = "Validation"
CONCLUDED_CONFORMANT = "ConcludedConformant"
CONCLUDED_VIOLATION = "ConcludedViolation"
CONCLUDED_INCONCLUSIVE = "ConcludedInconclusive"

LEGAL_TRANSITIONS = {
    (LOCALIZATION, DETECTION),
    (LOCALIZATION, CONCLUDED_INCONCLUSIVE),
    (DETECTION, VALIDATION),
    (DETECTION, RETRIEVAL),
    (DETECTION, CONCLUDED_CONFORMANT),
    (DETECTION, CONCLUDED_VIOLATION),  # only under --no-validation
    (DETECTION, CONCLUDED_INCONCLUSIVE),
    (RETRIEVAL, DETECTION),
    (RETRIEVAL, CONCLUDED_INCONCLUSIVE),
    (VALIDATION, CONCLUDED_VIOLATION),
    (VALIDATION, CONCLUDED_CONFORMANT),
    (VALIDATION, CONCLUDED_INCONCLUSIVE),
}


@dataclass(frozen=True)
class AgentSettings:
    model_tag: str = "detection-model"
    max_retrieval_iterations: int = 6
    max_gathered_items: int = 25
    token_budget: int = 300_000
    prompt_token_budget: int = 24_000
    fanout_dirs: int = 4
    fanout_files: int = 6
    fanout_functions: int = 8
    no_semantic_index: bool = False
    no_retrieval: bool = False
    no_validation: bool = False
    disabled_tools: frozenset[str] = frozenset()


@dataclass
class GatheredItem:
    entity_id: str
    kind: str  # function | struct | union | enum | typedef | macro
    name: str
    path: str
    span: tuple[int, int]
    text: str
    provenance: str  # "localized" | "tool:query" | "tool:query_callee" | "tool:query_caller"
    elided: bool = False


@dataclass(frozen=True)
class Verdict:
    decision: str  # Violation | Conformant | Inconclusive
    explanation: str
    implicated: tuple[str, ...]  # entity ids, all present in gathered
    confidence_note: str = ""


@dataclass
class AgentContext:
    prop: SemanticProperty
    gathered: list[GatheredItem] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    retrieval_left: int = 6
    tokens_left: int = 300_000
    trace: list[str] = field(default_factory=list)
    tool_executions: int = 0

    def gathered_ids(self) -> set[str]:
        return {g.entity_id for g in self.gathered}

    def add(self, item: GatheredItem, settings: AgentSettings) -> bool:
        """Append unless duplicate or over the capacity cap."""
        if item.entity_id in self.gathered_ids():
            return False
        if len(self.gathered) >= settings.max_gathered_items:
            self.notes.append(f"context capacity reached; dropped {item.entity_id}")
            return False
        self.gathered.append(item)
        return True


@dataclass
class PropertyOutcome:
    property_id: str
    section_ref: str
    status: str  # violation | conformant | inconclusive | error
    reason: str
    trace: list[str]
    verdicts: list[Verdict]
    validated: bool
    tool_executions: int
    transcript: list[dict]
    gathered: list[dict] = field(default_factory=list)  # entity catalog, no text


class _BudgetExhausted(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def entity_id_of(record) -> str:
    if isinstance(record, FunctionRecord):
        return record.id
    return f"{record.path}::{record.kind}:{record.name}@{record.span[0]}"


def _item_from(record, provenance: str) -> GatheredItem:
    if isinstance(record, FunctionRecord):
        return GatheredItem(
            entity_id=record.id,
            kind="function",
            name=record.name,
            path=record.path,
            span=record.body_span,
            text=record.body_text,
            provenance=provenance,
        )
    return GatheredItem(
        entity_id=entity_id_of(record),
        kind=record.kind,
        name=record.name,
        path=record.path,
        span=record.span,
        text=record.definition_text,
        provenance=provenance,
    )


def offered_tools(settings: AgentSettings) -> tuple[str, ...]:
    if settings.no_retrieval:
        return ()
    return tuple(
        t for t in ("query", "query_callee", "query_caller")
        if t not in settings.disabled_tools
    )


def _ask(ctx: AgentContext, client: LlmClient, settings: AgentSettings,
         state: str, prompt: str, label: str, tools: tuple[str, ...] = ()) -> str:
    cost = estimate_tokens(prompt)
    if ctx.tokens_left < cost:
        raise _BudgetExhausted("token budget exhausted")
    reply = client.complete(
        request(settings.model_tag, _SYSTEM, prompt, tools=tools)
    ).text
    ctx.tokens_left -= cost + estimate_tokens(reply)
    ctx.transcript.append(
        {"state": state, "label": label, "prompt": prompt, "response": reply}
    )
    return reply


def _ask_block(ctx, client, settings, state, prompt, label,
               tools: tuple[str, ...] = ()) -> dict | None:
    """Single attempt: the fenced JSON block of the reply, or None."""
    reply = _ask(ctx, client, settings, state, prompt, label, tools)
    return extract_json_block(reply)


# --- localization ----------------------------------------------------------------


class _NavTree:
    """Descent structure over the repository: index summaries when available,
    bare names and signatures under --no-semantic-index."""

    def __init__(self, model: CodebaseModel, index: SemanticIndex | None,
                 use_summaries: bool):
        self.skeleton = build_skeleton(model)
        self.index = index if use_summaries else None
        self.use_summaries = use_summaries and index is not None

    def kind(self, node_id: str) -> str:
        return self.skeleton.nodes[node_id].kind

    def children(self, node_id: str) -> list[str]:
        return list(self.skeleton.nodes[node_id].children)

    def display_name(self, node_id: str) -> str:
        return self.skeleton.nodes[node_id].name

    def entry_line(self, node_id: str) -> str:
        node = self.skeleton.nodes[node_id]
        marker = {"function": "fn", "file": "file", "directory": "dir", "repo": "repo"}[
            node.kind
        ]
        if self.use_summaries:
            indexed = self.index.nodes.get(node_id)
            summary = (
                indexed.summary
                if indexed is not None and indexed.summary and not indexed.summary_missing
                else "(unsummarized)"
            )
            return f"- [{marker}] {node.name}: {summary}"
        if node.kind == "function":
            sig = " ".join(self.skeleton.fn_records[node_id].signature.split())
            return f"- [{marker}] {node.name}: {sig}"
        return f"- [{marker}] {node.name}"

    def function_record(self, node_id: str) -> FunctionRecord:
        return self.skeleton.fn_records[node_id]


def _parse_selection(block: dict | None) -> list[str] | None:
    if block is None:
        return None
    sel = block.get("select")
    if not isinstance(sel, list) or not all(isinstance(s, str) for s in sel):
        return None
    return sel


def localize(
    prop: SemanticProperty,
    index: SemanticIndex | None,
    model: CodebaseModel,
    client: LlmClient,
    settings: AgentSettings,
    ctx: AgentContext,
) -> list[FunctionRecord]:
    """Top-down descent from the repository root; returns the selected
    functions, which may span multiple files."""
    nav = _NavTree(model, index, use_summaries=not settings.no_semantic_index)
    found: list[FunctionRecord] = []

    def select_from(node_id: str, names: list[str], candidates: list[str]) -> list[str]:
        chosen = []
        for child_id in candidates:
            if nav.display_name(child_id) in names or child_id in names:
                chosen.append(child_id)
        return chosen

    def visit(node_id: str) -> None:
        kind = nav.kind(node_id)
        children = nav.children(node_id)
        if not children:
            return
        entries = "\n".join(nav.entry_line(c) for c in children)
        template = "localize_functions" if kind == "file" else "localize"
        label = node_id if node_id != ROOT_ID else "repository root"
        prompt = render(
            template,
            property_id=prop.property_id,
            section=prop.section_ref,
            modality=prop.modality,
            statement=prop.statement,
            excerpt=prop.source_excerpt,
            label=label,
            entries=entries,
        )
        names = _parse_selection(
            _ask_block(ctx, client, settings, LOCALIZATION, prompt, f"localize:{label}")
        )
        if names is None:
            names = _parse_selection(
                _ask_block(
                    ctx, client, settings, LOCALIZATION,
                    prompt + "\n\n" + FORMAT_REMINDER, f"localize:{label}/retry",
                )
            )
        if names is None:
            ctx.notes.append(f"localization reply unusable at {label}; treating as empty")
            return
        if kind == "file":
            picked = select_from(node_id, names, children)[: settings.fanout_functions]
            for child_id in picked:
                found.append(nav.function_record(child_id))
            return
        dirs = [c for c in children if nav.kind(c) == "directory"]
        files = [c for c in children if nav.kind(c) == "file"]
        for child_id in (
            select_from(node_id, names, dirs)[: settings.fanout_dirs]
            + select_from(node_id, names, files)[: settings.fanout_files]
        ):
            visit(child_id)

    visit(ROOT_ID)
    return found


# --- detection --------------------------------------------------------------------


def _observation_block(item: GatheredItem) -> str:
    if item.elided:
        return (
            f"[{item.provenance}] {item.kind} id={item.entity_id} "
            f"(path: {item.path}, bytes {item.span[0]}..{item.span[1]}) "
            "(text elided to fit the context budget)"
        )
    return (
        f"[{item.provenance}] {item.kind} id={item.entity_id} "
        f"(path: {item.path}, bytes {item.span[0]}..{item.span[1]})\n"
        f"```c\n{item.text}\n```"
    )


def _apply_elision(ctx: AgentContext, settings: AgentSettings) -> None:
    """Oldest tool-retrieved items are elided before localized seeds."""

    def total() -> int:
        return sum(estimate_tokens(_observation_block(g)) for g in ctx.gathered)

    if total() <= settings.prompt_token_budget:
        return
    for localized_pass in (False, True):
        for item in ctx.gathered:
            if item.elided:
                continue
            if (item.provenance == "localized") is not localized_pass:
                continue
            item.elided = True
            if total() <= settings.prompt_token_budget:
                return


def _observations_text(ctx: AgentContext, settings: AgentSettings) -> str:
    _apply_elision(ctx, settings)
    return "\n\n".join(_observation_block(g) for g in ctx.gathered)


_TOOL_ARG_KEYS = {
    "query": ("name",),
    "query_callee": ("caller", "callee"),
    "query_caller": ("function",),
}


def _parse_requests(raw) -> list[dict] | None:
    if not isinstance(raw, list) or not raw:
        return None
    out = []
    for entry in raw:
        if not isinstance(entry, dict):
            return None
        tool = entry.get("tool")
        keys = _TOOL_ARG_KEYS.get(tool)
        if keys is None:
            return None
        if not all(isinstance(entry.get(k), str) and entry.get(k) for k in keys):
            return None
        out.append({"tool": tool, **{k: entry[k] for k in keys}})
    return out


def detect(
    ctx: AgentContext, client: LlmClient, settings: AgentSettings
) -> tuple[str, object]:
    """One Detection step: ('violation', Verdict) | ('conformant', str) |
    ('insufficient', [invocation dict]) | ('malformed', None)."""
    notes = ""
    if ctx.notes:
        notes = "Observations from earlier retrieval:\n" + "\n".join(
            f"- {n}" for n in ctx.notes
        ) + "\n"
    prompt = render(
        "detect",
        property_id=ctx.prop.property_id,
        section=ctx.prop.section_ref,
        modality=ctx.prop.modality,
        statement=ctx.prop.statement,
        excerpt=ctx.prop.source_excerpt,
        count=len(ctx.gathered),
        observations=_observations_text(ctx, settings),
        notes=notes,
    )

    def interpret(block: dict | None):
        if block is None:
            return None
        decision = block.get("decision")
        if decision == "conformant":
            return ("conformant", str(block.get("explanation", "")))
        if decision == "violation":
            implicated = block.get("implicated")
            if not isinstance(implicated, list) or not implicated:
                return None
            ids = tuple(str(i) for i in implicated)
            if not set(ids) <= ctx.gathered_ids():
                return None  # citing never-retrieved code is a protocol breach
            return (
                "violation",
                Verdict(
                    decision="Violation",
                    explanation=str(block.get("explanation", "")),
                    implicated=ids,
                ),
            )
        if decision == "insufficient":
            requests_ = _parse_requests(block.get("requests"))
            if requests_ is None:
                return None
            return ("insufficient", requests_)
        return None

    tools = offered_tools(settings)
    result = interpret(
        _ask_block(ctx, client, settings, DETECTION, prompt, "detect", tools)
    )
    if result is not None:
        return result
    result = interpret(
        _ask_block(
            ctx, client, settings, DETECTION,
            prompt + "\n\n" + FORMAT_REMINDER, "detect/retry", tools,
        )
    )
    return result if result is not None else ("malformed", None)


# --- retrieval --------------------------------------------------------------------


def execute_tool(
    invocation: dict,
    model: CodebaseModel,
    ctx: AgentContext,
    settings: AgentSettings,
) -> None:
    """Run one tool invocation against the code model, appending results to the
    gathered context and human-readable notes to the transcript."""
    tool = invocation["tool"]
    if tool in settings.disabled_tools:
        ctx.notes.append(f"tool disabled by configuration: {tool}")
        return
    ctx.tool_executions += 1
    provenance = f"tool:{tool}"

    def add_records(records) -> int:
        added = 0
        for rec in records:
            if ctx.add(_item_from(rec, provenance), settings):
                added += 1
        return added

    if tool == "query":
        name = invocation["name"]
        hits = lookup_definition(model, name)
        if not hits:
            ctx.notes.append(f"definition not found: {name}")
        else:
            add_records(hits)
        return

    if tool == "query_callee":
        caller_name, callee_name = invocation["caller"], invocation["callee"]
        callers = [
            g for g in ctx.gathered if g.kind == "function" and g.name == caller_name
        ]
        caller_records = (
            [model.function(g.entity_id) for g in callers if model.has_function(g.entity_id)]
            or [f for f in model.functions if f.name == caller_name]
        )
        if not caller_records:
            ctx.notes.append(f"unknown caller: {caller_name}")
            return
        sites = [
            s
            for fn in caller_records
            for s in model.sites_of(fn.id)
            if s.callee_name == callee_name
        ]
        if not sites:
            ctx.notes.append(f"no call to {callee_name} found inside {caller_name}")
            return
        added = 0
        for site in sites:
            added += add_records(resolve_callees(model, site))
        if added == 0 and all(not resolve_callees(model, s) for s in sites):
            ctx.notes.append(
                f"external callee: {callee_name} is not defined in this repository"
            )
        return

    if tool == "query_caller":
        fn_name = invocation["function"]
        targets = [f for f in model.functions if f.name == fn_name]
        if not targets:
            ctx.notes.append(f"unknown function: {fn_name}")
            return
        added = 0
        for fn in targets:
            for caller, _site in resolve_callers(model, fn.id):
                added += add_records([caller])
        if added == 0:
            ctx.notes.append(f"no callers found for {fn_name}")
        return


# --- validation -------------------------------------------------------------------


def validate(
    ctx: AgentContext,
    candidate: Verdict,
    client: LlmClient,
    settings: AgentSettings,
) -> tuple[str, str, list[Verdict]]:
    """Self-critique over the full context: ('confirm'|'refute'|'malformed',
    explanation, extra verdicts for bugs the earlier steps missed)."""
    reasoning = "\n".join(
        f"[{t['state']}] {t['response']}" for t in ctx.transcript if t["state"] == DETECTION
    )
    prompt = render(
        "validate",
        property_id=ctx.prop.property_id,
        section=ctx.prop.section_ref,
        modality=ctx.prop.modality,
        statement=ctx.prop.statement,
        excerpt=ctx.prop.source_excerpt,
        count=len(ctx.gathered),
        observations=_observations_text(ctx, settings),
        candidate=f"{candidate.explanation}\nimplicated: {', '.join(candidate.implicated)}",
        reasoning=reasoning or "(none recorded)",
    )

    def interpret(block: dict | None):
        if block is None:
            return None
        verdict = block.get("verdict")
        if verdict not in ("confirm", "refute"):
            return None
        extras = []
        for raw in block.get("additional_violations", []) or []:
            if not isinstance(raw, dict):
                continue
            ids = raw.get("implicated")
            if not isinstance(ids, list) or not ids:
                continue
            ids = tuple(str(i) for i in ids)
            if not set(ids) <= ctx.gathered_ids():
                ctx.notes.append(
                    "validation cited code outside the gathered context; entry dropped"
                )
                continue
            extras.append(
                Verdict(
                    decision="Violation",
                    explanation=str(raw.get("explanation", "")),
                    implicated=ids,
                    confidence_note="surfaced during validation review",
                )
            )
        return (verdict, str(block.get("explanation", "")), extras)

    result = interpret(_ask_block(ctx, client, settings, VALIDATION, prompt, "validate"))
    if result is None:
        result = interpret(
            _ask_block(
                ctx, client, settings, VALIDATION,
                prompt + "\n\n" + FORMAT_REMINDER, "validate/retry",
            )
        )
    return result if result is not None else ("malformed", "", [])


# --- the state machine ---------------------------------------------------------


def run_property(
    prop: SemanticProperty,
    index: SemanticIndex | None,
    model: CodebaseModel,
    client: LlmClient,
    settings: AgentSettings | None = None,
) -> PropertyOutcome:
    settings = settings or AgentSettings()
    ctx = AgentContext(
        prop=prop,
        retrieval_left=settings.max_retrieval_iterations,
        tokens_left=settings.token_budget,
    )

    def conclude(state: str, status: str, reason: str, verdicts=(), validated=False):
        ctx.trace.append(state)
        return PropertyOutcome(
            property_id=prop.property_id,
            section_ref=prop.section_ref,
            status=status,
            reason=reason,
            trace=ctx.trace,
            verdicts=list(verdicts),
            validated=validated,
            tool_executions=ctx.tool_executions,
            transcript=ctx.transcript,
            gathered=[
                {
                    "entity_id": g.entity_id,
                    "kind": g.kind,
                    "name": g.name,
                    "path": g.path,
                    "span": list(g.span),
                    "provenance": g.provenance,
                }
                for g in ctx.gathered
            ],
        )

    ctx.trace.append(LOCALIZATION)
    try:
        seeds = localize(prop, index, model, client, settings, ctx)
        if not seeds:
            return conclude(CONCLUDED_INCONCLUSIVE, "inconclusive", "no relevant code")
        for fn in seeds:
            ctx.add(_item_from(fn, "localized"), settings)

        while True:
            ctx.trace.append(DETECTION)
            kind, payload = detect(ctx, client, settings)

            if kind == "malformed":
                return conclude(
                    CONCLUDED_INCONCLUSIVE, "inconclusive", "malformed model output"
                )
            if kind == "conformant":
                return conclude(CONCLUDED_CONFORMANT, "conformant", str(payload))
            if kind == "violation":
                candidate: Verdict = payload
                if settings.no_validation:
                    return conclude(
                        CONCLUDED_VIOLATION,
                        "violation",
                        "validation disabled by configuration",
                        verdicts=[candidate],
                        validated=False,
                    )
                ctx.trace.append(VALIDATION)
                verdict, explanation, extras = validate(ctx, candidate, client, settings)
                if verdict == "malformed":
                    return conclude(
                        CONCLUDED_VIOLATION,
                        "violation",
                        "validation reply malformed; candidate kept unvalidated",
                        verdicts=[candidate],
                        validated=False,
                    )
                confirmed = [replace(candidate, confidence_note=explanation)] if verdict == "confirm" else []
                final = confirmed + extras
                if final:
                    return conclude(
                        CONCLUDED_VIOLATION,
                        "violation",
                        explanation,
                        verdicts=final,
                        validated=True,
                    )
                return conclude(
                    CONCLUDED_CONFORMANT,
                    "conformant",
                    f"candidate refuted in validation: {explanation}",
                    validated=True,
                )

            # insufficient context
            if settings.no_retrieval:
                return conclude(
                    CONCLUDED_INCONCLUSIVE,
                    "inconclusive",
                    "context insufficient and retrieval disabled",
                )
            if ctx.retrieval_left <= 0:
                return conclude(
                    CONCLUDED_INCONCLUSIVE, "inconclusive", "retrieval budget exhausted"
                )
            ctx.trace.append(RETRIEVAL)
            ctx.retrieval_left -= 1
            for invocation in payload:
                execute_tool(invocation, model, ctx, settings)
    except _BudgetExhausted as exc:
        return conclude(CONCLUDED_INCONCLUSIVE, "inconclusive", exc.reason)


@dataclass
class AuditRun:
    rfc_id: str
    repo_label: str
    outcomes: list[PropertyOutcome]
    usage: dict
    settings: AgentSettings


def run_audit(
    properties: list[SemanticProperty],
    index: SemanticIndex | None,
    model: CodebaseModel,
    client: LlmClient,
    settings: AgentSettings | None = None,
    parallelism: int = 1,
) -> AuditRun:
    """Drive run_property over every property; failures are isolated per
    property. Properties are independent and may run concurrently; replay
    backends force serial execution to preserve cassette order."""
    settings = settings or AgentSettings()
    mark = client.mark()

    def one(prop: SemanticProperty) -> PropertyOutcome:
        try:
            return run_property(prop, index, model, client, settings)
        except Exception as exc:  # noqa: BLE001 - the run must complete
            return PropertyOutcome(
                property_id=prop.property_id,
                section_ref=prop.section_ref,
                status="error",
                reason=f"{type(exc).__name__}: {exc}",
                trace=[],
                verdicts=[],
                validated=False,
                tool_executions=0,
                transcript=[],
            )

    workers = 1 if client.serial_only else max(1, parallelism)
    if workers > 1 and len(properties) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, properties))
    else:
        outcomes = [one(p) for p in properties]
    usage = client.usage(since=mark)
    rfc_id = properties[0].rfc_id if properties else ""
    return AuditRun(
        rfc_id=rfc_id,
        repo_label=model.root_label,
        outcomes=outcomes,
        usage=usage.as_dict(),
        settings=settings,
    )


def trace_is_legal(trace: list[str]) -> bool:
    """Every recorded trace must be a word in the transition relation."""
    if not trace:
        return False
    if trace[0] != LOCALIZATION:
        return False
    for a, b in zip(trace, trace[1:]):
        if (a, b) not in LEGAL_TRANSITIONS:
            return False
    return trace[-1] in (
        CONCLUDED_CONFORMANT,
        CONCLUDED_VIOLATION,
        CONCLUDED_INCONCLUSIVE,
    )
