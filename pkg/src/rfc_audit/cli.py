"""Command line entry point wiring the pipeline: index, properties, audit,
report, plus code-model debug tools.

Exit codes: 0 success, 1 completed with diagnostics (skipped files,
unprocessed sections, per-property errors), 2 configuration or usage errors.
Pipeline commands write a machine-readable status.json next to their output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import agent as agent_mod
from . import reporting
from .cmodel import (
    lookup_definition,
    resolve_callees,
    resolve_callers,
    scan_repository,
    sites_at_line,
)
from .config import Config, load_config, normalize_tools
from .errors import RfcAuditError
from .indexer import (
    IndexerSettings,
    build_index,
    load_index,
    persist_index,
    update_index,
)
from .llm import (
    Cassette,
    LiveBackend,
    LlmClient,
    MockBackend,
    Rates,
    RecordBackend,
    ReplayBackend,
)
from .properties import (
    ExtractionSettings,
    extract_document_properties,
    load_properties,
    save_properties,
)
from .rfc import parse_rfc
from .util import atomic_write_text, dump_json_stable


def _placeholder_responder(req):
    """Schema-valid, content-derived replies so `--backend mock` smoke runs
    finish: one property per keyworded section, localization selects nothing,
    so every property ends inconclusive with zero findings."""
    prompt = req.messages[0].content
    if "Extract every mandatory requirement" in prompt:
        body = prompt.split("Section text:\n", 1)[-1].split("\n\nRules:", 1)[0]
        line = next(
            (ln for ln in body.splitlines()[1:]
             if any(k in ln for k in ("MUST", "SHALL", "REQUIRED"))),
            None,
        )
        if line is None:
            return '```json\n{"properties": []}\n```'
        entry = {
            "statement": line.strip(),
            "modality": "MUST",
            "source_excerpt": line,
        }
        return "```json\n" + json.dumps({"properties": [entry]}) + "\n```"
    if "descending" in prompt or "descended to a source file" in prompt:
        return '```json\n{"select": []}\n```'
    if "double-checking a potential specification violation" in prompt:
        return '```json\n{"verdict": "refute", "explanation": "placeholder", "additional_violations": []}\n```'
    if "Decide one of:" in prompt:
        return '```json\n{"decision": "conformant", "explanation": "placeholder"}\n```'
    return "placeholder summary"


def make_client(cfg: Config) -> LlmClient:
    rates = Rates(cfg.rate_input_per_mtok, cfg.rate_output_per_mtok)
    if cfg.backend == "live":
        backend = LiveBackend(cfg.api_base, cfg.api_key_env, cfg.max_retries)
    elif cfg.backend == "record":
        backend = RecordBackend(
            LiveBackend(cfg.api_base, cfg.api_key_env, cfg.max_retries), cfg.cassette
        )
    elif cfg.backend == "replay":
        backend = ReplayBackend(Cassette.load(cfg.cassette))
    else:
        backend = MockBackend(_placeholder_responder)
    return LlmClient(backend, rates)


def _write_status(out_path: Path, command: str, exit_code: int,
                  diagnostics: list[str], outputs: dict) -> None:
    atomic_write_text(
        out_path.parent / "status.json",
        dump_json_stable(
            {
                "command": command,
                "exit_code": exit_code,
                "diagnostics": diagnostics,
                "outputs": outputs,
            }
        ),
    )


def _fail_usage(message: str) -> "click.exceptions.Exit":
    click.echo(f"error: {message}", err=True)
    return SystemExit(2)


def common_backend_options(fn):
    fn = click.option("--backend", type=click.Choice(["live", "record", "replay", "mock"]),
                      default=None, help="completion backend")(fn)
    fn = click.option("--cassette", type=click.Path(), default=None,
                      help="cassette file for record/replay")(fn)
    return fn


@click.group()
@click.option("--config", "config_file", type=click.Path(), default=None,
              help="TOML config file; flags and environment override it")
@click.pass_context
def main(ctx, config_file):
    """Audit C protocol implementations against RFC specification documents."""
    ctx.obj = {"config_file": config_file}


def _cfg(ctx, **flags) -> Config:
    try:
        return load_config(ctx.obj.get("config_file"), flags)
    except RfcAuditError as exc:
        raise _fail_usage(str(exc))


# --- index -----------------------------------------------------------------------


@main.command()
@click.argument("repo", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--model", "index_model", default=None, help="model tag for indexing")
@click.option("--parallelism", type=int, default=None)
@common_backend_options
@click.pass_context
def index(ctx, repo, out_path, index_model, parallelism, backend, cassette):
    """Build the semantic index for REPO, or update it if --out already exists."""
    cfg = _cfg(ctx, repo=repo, index_model=index_model, parallelism=parallelism,
               backend=backend, cassette=cassette)
    out = Path(out_path)
    try:
        model = scan_repository(cfg.repo, cfg.include, cfg.exclude)
        client = make_client(cfg)
        settings = IndexerSettings(
            model_tag=cfg.index_model,
            parallelism=cfg.parallelism,
            function_word_cap=cfg.function_word_cap,
            file_word_cap=cfg.file_word_cap,
            directory_word_cap=cfg.directory_word_cap,
        )
        if out.exists():
            result = update_index(load_index(out), model, client, settings)
            action = "updated"
        else:
            result = build_index(model, client, settings)
            action = "built"
        persist_index(result, out)
    except RfcAuditError as exc:
        raise _fail_usage(str(exc))

    diagnostics = [f"{d.path}: {d.message}" for d in model.diagnostics]
    diagnostics += [f"summary missing for {n}" for n in result.gaps]
    code = 1 if diagnostics else 0
    _write_status(out, "index", code, diagnostics, {
        "index": str(out),
        "nodes": len(result.nodes),
        "llm_calls": client.usage().call_count,
    })
    click.echo(
        f"{action} index with {len(result.nodes)} nodes "
        f"({client.usage().call_count} LLM calls) -> {out}"
    )
    for line in diagnostics:
        click.echo(f"warning: {line}", err=True)
    sys.exit(code)


# --- properties -------------------------------------------------------------------


@main.command()
@click.argument("rfc_txt", type=click.Path(exists=True, dir_okay=False, allow_dash=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--rfc-id", default=None, help="override document id, e.g. 'RFC 2080'")
@click.option("--model", "detection_model", default=None)
@click.option("--keyword-prefilter/--no-keyword-prefilter", default=None,
              help="skip sections without MUST/SHALL/REQUIRED (on by default)")
@common_backend_options
@click.pass_context
def properties(ctx, rfc_txt, out_path, rfc_id, detection_model,
               keyword_prefilter, backend, cassette):
    """Extract mandatory semantic properties from an RFC plain-text file."""
    cfg = _cfg(ctx, detection_model=detection_model, backend=backend,
               cassette=cassette, keyword_prefilter=keyword_prefilter)
    out = Path(out_path)
    text = (
        sys.stdin.read() if rfc_txt == "-" else Path(rfc_txt).read_text(encoding="utf-8")
    )
    try:
        doc = parse_rfc(text, rfc_id=rfc_id)
        client = make_client(cfg)
        settings = ExtractionSettings(
            model_tag=cfg.detection_model,
            keyword_prefilter=cfg.keyword_prefilter,
        )
        result = extract_document_properties(doc, client, settings)
        save_properties(result, out)
    except RfcAuditError as exc:
        raise _fail_usage(str(exc))

    diagnostics = list(doc.diagnostics) + list(result.diagnostics)
    diagnostics += [f"section {s} unprocessed" for s in result.unprocessed_sections]
    code = 1 if diagnostics else 0
    _write_status(out, "properties", code, diagnostics, {
        "properties": str(out),
        "count": len(result.properties),
        "skipped_sections": result.skipped_sections,
    })
    click.echo(
        f"extracted {len(result.properties)} properties from "
        f"{doc.rfc_id or 'document'} -> {out}"
    )
    for line in diagnostics:
        click.echo(f"warning: {line}", err=True)
    sys.exit(code)


# --- audit -----------------------------------------------------------------------


@main.command()
@click.option("--index", "index_path", type=click.Path(), default=None)
@click.option("--props", "props_path", type=click.Path(exists=True), required=True)
@click.option("--repo", "repo", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--no-semantic-index", is_flag=True, default=None,
              help="localize via names and signatures only")
@click.option("--no-retrieval", is_flag=True, default=None,
              help="disable all retrieval tools")
@click.option("--no-validation", is_flag=True, default=None,
              help="skip the self-critique pass")
@click.option("--disable-tool", "disable_tool", multiple=True,
              type=click.Choice(["query", "callee", "caller"]),
              help="disable a single retrieval tool (repeatable)")
@click.option("--max-retrieval", type=int, default=None)
@click.option("--model", "detection_model", default=None)
@common_backend_options
@click.pass_context
def audit(ctx, index_path, props_path, repo, out_path, no_semantic_index,
          no_retrieval, no_validation, disable_tool, max_retrieval,
          detection_model, backend, cassette):
    """Run the detection agent over every extracted property."""
    cfg = _cfg(ctx, repo=repo, backend=backend, cassette=cassette,
               no_semantic_index=no_semantic_index, no_retrieval=no_retrieval,
               no_validation=no_validation, max_retrieval=max_retrieval,
               detection_model=detection_model,
               disabled_tools=(normalize_tools(disable_tool) if disable_tool else None))
    out = Path(out_path)
    try:
        model = scan_repository(cfg.repo, cfg.include, cfg.exclude)
        props = load_properties(props_path)
        semantic_index = None
        if not cfg.no_semantic_index:
            if not index_path:
                raise _fail_usage("--index is required unless --no-semantic-index is set")
            semantic_index = load_index(index_path)
        client = make_client(cfg)
        settings = agent_mod.AgentSettings(
            model_tag=cfg.detection_model,
            max_retrieval_iterations=cfg.max_retrieval,
            max_gathered_items=cfg.max_gathered,
            token_budget=cfg.token_budget,
            prompt_token_budget=cfg.prompt_token_budget,
            fanout_dirs=cfg.fanout_dirs,
            fanout_files=cfg.fanout_files,
            fanout_functions=cfg.fanout_functions,
            no_semantic_index=cfg.no_semantic_index,
            no_retrieval=cfg.no_retrieval,
            no_validation=cfg.no_validation,
            disabled_tools=frozenset(cfg.disabled_tools),
        )
        run = agent_mod.run_audit(
            props.properties, semantic_index, model, client, settings,
            parallelism=cfg.parallelism,
        )
        reports = reporting.build_reports(run, props.properties)
        doc = reporting.run_document(run, reports)
        atomic_write_text(out, dump_json_stable(doc))
        for outcome in run.outcomes:
            atomic_write_text(
                out.parent / reporting.transcript_name(outcome.property_id),
                dump_json_stable(
                    {
                        "property_id": outcome.property_id,
                        "status": outcome.status,
                        "trace": outcome.trace,
                        "transcript": outcome.transcript,
                    }
                ),
            )
    except RfcAuditError as exc:
        raise _fail_usage(str(exc))

    diagnostics = [f"{d.path}: {d.message}" for d in model.diagnostics]
    if not props.properties:
        diagnostics.append("properties file holds zero properties; nothing audited")
    diagnostics += [
        f"property {o.property_id}: {o.reason}"
        for o in run.outcomes
        if o.status == "error"
    ]
    code = 1 if diagnostics else 0
    _write_status(out, "audit", code, diagnostics, {
        "run": str(out),
        "reports": len(reports),
        "properties": len(run.outcomes),
    })
    click.echo(
        f"audited {len(run.outcomes)} properties: "
        f"{doc['summary']['violations']} violation(s), "
        f"{doc['summary']['conformant']} conformant, "
        f"{doc['summary']['inconclusive']} inconclusive -> {out}"
    )
    for line in diagnostics:
        click.echo(f"warning: {line}", err=True)
    sys.exit(code)


# --- report -----------------------------------------------------------------------


@main.command()
@click.argument("run_json", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]),
              default="markdown")
@click.option("--triage", "triage_path", type=click.Path(exists=True), default=None,
              help="JSON file: report_id -> {status, novelty}")
@click.option("--out", "out_path", type=click.Path(), default=None)
def report(run_json, fmt, triage_path, out_path):
    """Group a run's reports into unique bugs and render them."""
    run_doc = json.loads(Path(run_json).read_text(encoding="utf-8"))
    reports = [reporting.report_from_dict(r) for r in run_doc.get("reports", [])]
    diagnostics: list[str] = []
    if triage_path:
        triage = json.loads(Path(triage_path).read_text(encoding="utf-8"))
        diagnostics = reporting.apply_triage(reports, triage)
        run_doc["reports"] = [reporting.report_to_dict(r) for r in reports]
    groups = reporting.group_reports(reports)
    rendered = reporting.render(run_doc, groups, fmt)
    if out_path:
        atomic_write_text(Path(out_path), rendered)
        _write_status(Path(out_path), "report", 1 if diagnostics else 0, diagnostics,
                      {"report": str(out_path), "groups": len(groups)})
        click.echo(f"wrote {fmt} report with {len(groups)} group(s) -> {out_path}")
    else:
        click.echo(rendered, nl=False)
    for line in diagnostics:
        click.echo(f"warning: {line}", err=True)
    sys.exit(1 if diagnostics else 0)


# --- debug tools -------------------------------------------------------------------


@main.group()
def tools():
    """Code-model debug lookups (no LLM involved)."""


def _tool_model(ctx, repo):
    cfg = _cfg(ctx, repo=repo)
    try:
        return scan_repository(cfg.repo, cfg.include, cfg.exclude)
    except RfcAuditError as exc:
        raise _fail_usage(str(exc))


def _record_payload(rec) -> dict:
    if hasattr(rec, "body_span"):
        return {
            "kind": "function", "name": rec.name, "path": rec.path,
            "span": list(rec.body_span), "arity": rec.arity,
            "signature": rec.signature, "text": rec.body_text,
        }
    return {
        "kind": rec.kind, "name": rec.name, "path": rec.path,
        "span": list(rec.span), "text": rec.definition_text,
    }


@tools.command("def")
@click.argument("name")
@click.option("--repo", type=click.Path(exists=True, file_okay=False), required=True)
@click.pass_context
def tools_def(ctx, name, repo):
    """Every definition of NAME: functions, types, macros."""
    model = _tool_model(ctx, repo)
    hits = lookup_definition(model, name)
    click.echo(dump_json_stable([_record_payload(h) for h in hits]), nl=False)
    if not hits:
        click.echo(f"definition not found: {name}", err=True)
    sys.exit(0)


@tools.command("callers")
@click.argument("name")
@click.option("--repo", type=click.Path(exists=True, file_okay=False), required=True)
@click.pass_context
def tools_callers(ctx, name, repo):
    """Every caller of the function NAME."""
    model = _tool_model(ctx, repo)
    targets = [f for f in model.functions if f.name == name]
    if not targets:
        click.echo(f"error: no function named {name}", err=True)
        sys.exit(2)
    payload = []
    for fn in targets:
        for caller, site in resolve_callers(model, fn.id):
            payload.append(
                {
                    "target": fn.id,
                    "caller": caller.name,
                    "caller_path": caller.path,
                    "call_span": list(site.span),
                    "arg_count": site.arg_count,
                }
            )
    click.echo(dump_json_stable(payload), nl=False)
    sys.exit(0)


@tools.command("callees")
@click.argument("site_ref")
@click.option("--repo", type=click.Path(exists=True, file_okay=False), required=True)
@click.pass_context
def tools_callees(ctx, site_ref, repo):
    """Callee definitions for call sites at FILE:LINE."""
    if ":" not in site_ref:
        click.echo("error: expected FILE:LINE", err=True)
        sys.exit(2)
    path, _, line_s = site_ref.rpartition(":")
    try:
        line = int(line_s)
    except ValueError:
        click.echo("error: expected FILE:LINE with a numeric line", err=True)
        sys.exit(2)
    model = _tool_model(ctx, repo)
    payload = []
    for site in sites_at_line(model, path, line):
        callees = resolve_callees(model, site)
        payload.append(
            {
                "callee_name": site.callee_name,
                "arg_count": site.arg_count,
                "external": not callees,
                "definitions": [_record_payload(c) for c in callees],
            }
        )
    click.echo(dump_json_stable(payload), nl=False)
    sys.exit(0)


# --- config -----------------------------------------------------------------------


@main.group(name="config")
def config_group():
    """Inspect the effective configuration."""


@config_group.command("show")
@click.pass_context
def config_show(ctx):
    """Print the effective configuration after all layers are applied."""
    cfg = _cfg(ctx)
    click.echo(dump_json_stable(cfg.as_dict()), nl=False)
    sys.exit(0)


if __name__ == "__main__":
    main()
