"""Audit output: inconsistency reports, unique-bug grouping, rendering, precision.

Two reports land in the same group iff their implicated function sets
intersect (transitive closure); the rule is deterministic so the grouping is
reproducible. An LLM-assisted similarity merge exists as an opt-in second
pass and is off by default for exactly that reason. Novelty and
true/false-positive status are human triage fields and never inferred.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .agent import AuditRun

RUN_VERSION = 1
REPORT_VERSION = 1

TRIAGE_STATUSES = ("unreviewed", "confirmed-TP", "rejected-FP")
NOVELTY_VALUES = ("new", "old", "unknown")


@dataclass(frozen=True)
class ImplicatedLocation:
    entity_id: str
    kind: str
    name: str
    path: str
    span: tuple[int, int]


@dataclass
class InconsistencyReport:
    report_id: str
    property_id: str
    rfc_section: str
    modality: str
    statement: str
    source_excerpt: str
    explanation: str
    confidence_note: str
    validated: bool
    implicated: list[ImplicatedLocation]
    transcript_path: str
    status: str = "unreviewed"
    novelty: str = "unknown"

    @property
    def implicated_functions(self) -> frozenset[str]:
        return frozenset(l.entity_id for l in self.implicated if l.kind == "function")


@dataclass
class UniqueBugGroup:
    group_id: str
    member_report_ids: list[str]
    canonical_locations: list[str]  # "name (path)" for every implicated function
    novelty: str = "unknown"


def transcript_name(property_id: str) -> str:
    safe = "".join(c if (c.isalnum() or c in "._-") else "_" for c in property_id)
    return f"transcripts/{safe}.json"


def build_reports(run: AuditRun, properties=None) -> list[InconsistencyReport]:
    """One report per final Violation verdict, carrying the property text."""
    by_id = {p.property_id: p for p in (properties or [])}
    reports: list[InconsistencyReport] = []
    for outcome in run.outcomes:
        if outcome.status != "violation":
            continue
        catalog = {g["entity_id"]: g for g in outcome.gathered}
        prop = by_id.get(outcome.property_id)
        for ordinal, verdict in enumerate(outcome.verdicts, start=1):
            implicated = []
            for entity_id in verdict.implicated:
                g = catalog[entity_id]  # evidence closure guarantees presence
                implicated.append(
                    ImplicatedLocation(
                        entity_id=entity_id,
                        kind=g["kind"],
                        name=g["name"],
                        path=g["path"],
                        span=(g["span"][0], g["span"][1]),
                    )
                )
            reports.append(
                InconsistencyReport(
                    report_id=f"{outcome.property_id}/{ordinal}",
                    property_id=outcome.property_id,
                    rfc_section=outcome.section_ref,
                    modality=prop.modality if prop else "",
                    statement=prop.statement if prop else "",
                    source_excerpt=prop.source_excerpt if prop else "",
                    explanation=verdict.explanation,
                    confidence_note=verdict.confidence_note,
                    validated=outcome.validated,
                    implicated=implicated,
                    transcript_path=transcript_name(outcome.property_id),
                )
            )
    return reports


def group_reports(reports: list[InconsistencyReport]) -> list[UniqueBugGroup]:
    """Partition via transitive closure of implicated-function overlap.

    Union-find keyed by report; reports with no implicated functions stay
    singleton groups. Deterministic: groups ordered by smallest member id.
    """
    parent = {r.report_id: r.report_id for r in reports}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    owner_by_function: dict[str, str] = {}
    for report in sorted(reports, key=lambda r: r.report_id):
        for fn in sorted(report.implicated_functions):
            if fn in owner_by_function:
                union(report.report_id, owner_by_function[fn])
            else:
                owner_by_function[fn] = report.report_id

    members: dict[str, list[InconsistencyReport]] = {}
    for report in reports:
        members.setdefault(find(report.report_id), []).append(report)

    groups = []
    for root in sorted(members, key=lambda r: min(x.report_id for x in members[r])):
        group_reports_ = sorted(members[root], key=lambda r: r.report_id)
        locations = sorted(
            {
                f"{loc.name} ({loc.path})"
                for r in group_reports_
                for loc in r.implicated
                if loc.kind == "function"
            }
        )
        novelty = next(
            (r.novelty for r in group_reports_ if r.novelty != "unknown"), "unknown"
        )
        groups.append(
            UniqueBugGroup(
                group_id=f"G{len(groups) + 1}",
                member_report_ids=[r.report_id for r in group_reports_],
                canonical_locations=locations,
                novelty=novelty,
            )
        )
    return groups


def merge_groups_by_similarity(
    groups: list[UniqueBugGroup],
    reports: list[InconsistencyReport],
    client,
    model_tag: str = "detection-model",
) -> list[UniqueBugGroup]:
    """Opt-in second grouping pass: ask the LLM which groups describe the same
    underlying defect and union them. A malformed or empty reply leaves the
    deterministic grouping untouched."""
    from .llm import request as llm_request
    from .prompts import render
    from .protocol import extract_json_block

    if len(groups) < 2:
        return groups
    by_id = {r.report_id: r for r in reports}
    digests = []
    for g in groups:
        first = by_id[g.member_report_ids[0]]
        digests.append(
            f"- {g.group_id}: functions {', '.join(g.canonical_locations) or '(none)'}; "
            f"section {first.rfc_section}; {first.explanation[:200]}"
        )
    reply = client.complete(
        llm_request(
            model_tag,
            "You consolidate duplicate findings from a code audit.",
            render("group_merge", groups="\n".join(digests)),
        )
    ).text
    block = extract_json_block(reply)
    if block is None or not isinstance(block.get("merge"), list):
        return groups

    known = {g.group_id for g in groups}
    parent = {gid: gid for gid in known}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for cluster in block["merge"]:
        if not isinstance(cluster, list):
            continue
        ids = [g for g in cluster if isinstance(g, str) and g in known]
        for a, b in zip(ids, ids[1:]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    merged_members: dict[str, list[str]] = {}
    merged_locations: dict[str, set[str]] = {}
    for g in groups:
        root = find(g.group_id)
        merged_members.setdefault(root, []).extend(g.member_report_ids)
        merged_locations.setdefault(root, set()).update(g.canonical_locations)

    out = []
    for root in sorted(merged_members, key=lambda r: min(merged_members[r])):
        members = sorted(merged_members[root])
        novelty = next(
            (by_id[m].novelty for m in members if by_id[m].novelty != "unknown"),
            "unknown",
        )
        out.append(
            UniqueBugGroup(
                group_id=f"G{len(out) + 1}",
                member_report_ids=members,
                canonical_locations=sorted(merged_locations[root]),
                novelty=novelty,
            )
        )
    return out


# --- triage and metrics -----------------------------------------------------------


def apply_triage(reports: list[InconsistencyReport], triage: dict) -> list[str]:
    """Stamp human statuses onto reports; returns diagnostics for bad entries."""
    diagnostics = []
    by_id = {r.report_id: r for r in reports}
    for report_id, entry in sorted(triage.items()):
        report = by_id.get(report_id)
        if report is None:
            diagnostics.append(f"triage references unknown report: {report_id}")
            continue
        status = entry.get("status", "unreviewed")
        novelty = entry.get("novelty", "unknown")
        if status not in TRIAGE_STATUSES:
            diagnostics.append(f"triage {report_id}: invalid status {status!r}")
            continue
        if novelty not in NOVELTY_VALUES:
            diagnostics.append(f"triage {report_id}: invalid novelty {novelty!r}")
            continue
        report.status = status
        report.novelty = novelty
    return diagnostics


def summarize_precision(reports: list[InconsistencyReport]) -> dict:
    """precision = confirmed / (confirmed + rejected); unreviewed reports are
    counted separately and never inflate the metric."""
    confirmed = sum(1 for r in reports if r.status == "confirmed-TP")
    rejected = sum(1 for r in reports if r.status == "rejected-FP")
    unreviewed = sum(1 for r in reports if r.status == "unreviewed")
    reviewed = confirmed + rejected
    return {
        "reports": len(reports),
        "confirmed": confirmed,
        "rejected": rejected,
        "unreviewed": unreviewed,
        "precision": (confirmed / reviewed) if reviewed else None,
    }


# --- documents -----------------------------------------------------------------


def report_to_dict(report: InconsistencyReport) -> dict:
    return {
        "report_id": report.report_id,
        "property_id": report.property_id,
        "rfc_section": report.rfc_section,
        "modality": report.modality,
        "statement": report.statement,
        "source_excerpt": report.source_excerpt,
        "explanation": report.explanation,
        "confidence_note": report.confidence_note,
        "validated": report.validated,
        "implicated": [
            {
                "entity_id": l.entity_id,
                "kind": l.kind,
                "name": l.name,
                "path": l.path,
                "span": list(l.span),
            }
            for l in report.implicated
        ],
        "transcript": report.transcript_path,
        "status": report.status,
        "novelty": report.novelty,
    }


def report_from_dict(data: dict) -> InconsistencyReport:
    return InconsistencyReport(
        report_id=data["report_id"],
        property_id=data["property_id"],
        rfc_section=data["rfc_section"],
        modality=data["modality"],
        statement=data["statement"],
        source_excerpt=data["source_excerpt"],
        explanation=data["explanation"],
        confidence_note=data["confidence_note"],
        validated=data["validated"],
        implicated=[
            ImplicatedLocation(
                entity_id=l["entity_id"],
                kind=l["kind"],
                name=l["name"],
                path=l["path"],
                span=(l["span"][0], l["span"][1]),
            )
            for l in data["implicated"]
        ],
        transcript_path=data["transcript"],
        status=data.get("status", "unreviewed"),
        novelty=data.get("novelty", "unknown"),
    )


def run_document(run: AuditRun, reports: list[InconsistencyReport]) -> dict:
    """The run.json payload: stable content, no wall-clock stamps, byte-identical
    across identical replay runs."""
    statuses = [o.status for o in run.outcomes]
    return {
        "version": RUN_VERSION,
        "rfc_id": run.rfc_id,
        "repo": run.repo_label,
        "ablation": {
            "no_semantic_index": run.settings.no_semantic_index,
            "no_retrieval": run.settings.no_retrieval,
            "no_validation": run.settings.no_validation,
            "disabled_tools": sorted(run.settings.disabled_tools),
        },
        "outcomes": [
            {
                "property_id": o.property_id,
                "section": o.section_ref,
                "status": o.status,
                "reason": o.reason,
                "trace": o.trace,
                "validated": o.validated,
                "tool_executions": o.tool_executions,
                "gathered": o.gathered,
                "transcript": transcript_name(o.property_id),
            }
            for o in run.outcomes
        ],
        "reports": [report_to_dict(r) for r in reports],
        "usage": run.usage,
        "summary": {
            "properties": len(run.outcomes),
            "violations": statuses.count("violation"),
            "conformant": statuses.count("conformant"),
            "inconclusive": statuses.count("inconclusive"),
            "errors": statuses.count("error"),
            "reports": len(reports),
            "unvalidated_reports": sum(1 for r in reports if not r.validated),
        },
    }


# --- rendering -----------------------------------------------------------------


def render(run_doc: dict, groups: list[UniqueBugGroup], fmt: str = "json") -> str:
    if fmt == "json":
        return _render_json(run_doc, groups)
    if fmt == "markdown":
        return _render_markdown(run_doc, groups)
    raise ValueError(f"unknown format: {fmt}")


def _groups_payload(groups: list[UniqueBugGroup]) -> list[dict]:
    return [
        {
            "group_id": g.group_id,
            "members": g.member_report_ids,
            "canonical_locations": g.canonical_locations,
            "novelty": g.novelty,
        }
        for g in groups
    ]


def _render_json(run_doc: dict, groups: list[UniqueBugGroup]) -> str:
    reports = [report_from_dict(r) for r in run_doc.get("reports", [])]
    payload = {
        "version": REPORT_VERSION,
        "rfc_id": run_doc.get("rfc_id", ""),
        "repo": run_doc.get("repo", ""),
        "summary": run_doc.get("summary", {}),
        "metrics": summarize_precision(reports),
        "groups": _groups_payload(groups),
        "reports": run_doc.get("reports", []),
        "usage": run_doc.get("usage", {}),
    }
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _render_markdown(run_doc: dict, groups: list[UniqueBugGroup]) -> str:
    reports = {r["report_id"]: r for r in run_doc.get("reports", [])}
    parsed = [report_from_dict(r) for r in run_doc.get("reports", [])]
    metrics = summarize_precision(parsed)
    usage = run_doc.get("usage", {})
    lines = [
        f"# Audit report: {run_doc.get('repo', '?')} vs {run_doc.get('rfc_id', '?')}",
        "",
        f"{len(groups)} unique bug group(s) from {len(reports)} report(s); "
        f"{run_doc.get('summary', {}).get('properties', 0)} properties audited.",
        "",
    ]
    for group in groups:
        lines.append(f"## {group.group_id} — {', '.join(group.canonical_locations) or 'no function attributed'}")
        lines.append("")
        lines.append(f"Members: {', '.join(group.member_report_ids)} (novelty: {group.novelty})")
        lines.append("")
        for member_id in group.member_report_ids:
            r = reports[member_id]
            lines.append(f"### {member_id} — section {r['rfc_section']} ({r['modality']})")
            lines.append("")
            lines.append(f"> {r['source_excerpt'].strip()}")
            lines.append("")
            lines.append(r["explanation"].strip() or "(no explanation recorded)")
            lines.append("")
            for loc in r["implicated"]:
                lines.append(
                    f"- `{loc['name']}` in `{loc['path']}` bytes {loc['span'][0]}..{loc['span'][1]}"
                )
            lines.append("")
            lines.append(
                f"Status: {r['status']}; validated: {'yes' if r['validated'] else 'no'}; "
                f"transcript: {r['transcript']}"
            )
            lines.append("")
    if metrics["precision"] is not None:
        lines.append(
            f"Triage: {metrics['confirmed']} confirmed, {metrics['rejected']} rejected, "
            f"{metrics['unreviewed']} unreviewed; precision "
            f"{metrics['precision'] * 100:.1f}%."
        )
    else:
        lines.append(
            f"Triage: {metrics['unreviewed']} unreviewed report(s); precision not applicable."
        )
    lines.append("")
    lines.append("## Usage")
    lines.append("")
    lines.append(
        f"| input tokens | output tokens | calls | wall time (s) | cost ($) |\n"
        f"|---:|---:|---:|---:|---:|\n"
        f"| {usage.get('input_tokens', 0)} | {usage.get('output_tokens', 0)} "
        f"| {usage.get('call_count', 0)} | {usage.get('wall_time', 0)} "
        f"| {usage.get('cost', 0)} |"
    )
    lines.append("")
    return "\n".join(lines)
