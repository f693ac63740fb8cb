"""Regenerate the committed fixture cassettes for the TREX mini world.

Run after any prompt-template or pipeline change that alters request hashes:

    python tests/record_cassettes.py

Replay matching is strict-ordered by request hash, so stale cassettes fail
loudly rather than replaying wrong answers; regeneration is the fix.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from scripted import MiniWorldScript

from rfc_audit.agent import AgentSettings, run_audit
from rfc_audit.cmodel import scan_repository
from rfc_audit.indexer import IndexerSettings, build_index
from rfc_audit.llm import LlmClient, MockBackend, RecordBackend
from rfc_audit.properties import ExtractionSettings, extract_document_properties
from rfc_audit.rfc import parse_rfc

FIXTURES = Path(__file__).parent / "fixtures"
CASSETTES = FIXTURES / "cassettes"


def recorder(path: Path) -> LlmClient:
    return LlmClient(RecordBackend(MockBackend(MiniWorldScript()), path))


def main() -> None:
    CASSETTES.mkdir(parents=True, exist_ok=True)
    model = scan_repository(FIXTURES / "mini_repo")
    spec_text = (FIXTURES / "mini_spec.txt").read_text(encoding="utf-8")
    doc = parse_rfc(spec_text)

    client = recorder(CASSETTES / "mini_index.json")
    index = build_index(model, client, IndexerSettings())
    print(f"mini_index.json: {client.usage().call_count} calls")

    client = recorder(CASSETTES / "mini_properties.json")
    props = extract_document_properties(doc, client, ExtractionSettings())
    print(f"mini_properties.json: {client.usage().call_count} calls, "
          f"{len(props.properties)} properties")

    client = recorder(CASSETTES / "mini_audit.json")
    run = run_audit(props.properties, index, model, client, AgentSettings())
    statuses = [o.status for o in run.outcomes]
    print(f"mini_audit.json: {client.usage().call_count} calls, statuses={statuses}")

    single = [p for p in props.properties if p.property_id == "RFC 10999:2.3:1"]
    assert single, "property 2.3 missing from extraction"

    client = recorder(CASSETTES / "mini_audit_single.json")
    run = run_audit(single, index, model, client, AgentSettings())
    print(f"mini_audit_single.json: {client.usage().call_count} calls, "
          f"status={run.outcomes[0].status}")

    client = recorder(CASSETTES / "mini_audit_noretrieval.json")
    run = run_audit(single, index, model, client, AgentSettings(no_retrieval=True))
    print(f"mini_audit_noretrieval.json: {client.usage().call_count} calls, "
          f"status={run.outcomes[0].status}")


if __name__ == "__main__":
    main()
