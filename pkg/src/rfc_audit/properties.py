"""Mandatory-requirement extraction from RFC sections.

Extraction runs per leaf subsection with the parent's prose prepended as
context. Every stored excerpt is substring-checked against the section body:
a reply containing a non-verbatim excerpt is rejected and retried once, and
entries that still fail are dropped with a diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ArtifactFormatError, ArtifactVersionError
from .llm import LlmClient, request
from .prompts import render
from .protocol import FORMAT_REMINDER, extract_json_block
from .rfc import RfcDocument, RfcSection
from .util import atomic_write_text, dump_json_stable

PROPERTIES_VERSION = 1

MANDATORY_KEYWORDS = ("MUST", "SHALL", "REQUIRED")
MODALITIES = ("MUST", "MUST_NOT", "SHALL", "REQUIRED")

_SYSTEM = "You extract mandatory protocol requirements from specification text."


@dataclass(frozen=True)
class SemanticProperty:
    property_id: str  # "<rfc id>:<section number>:<ordinal>"
    rfc_id: str
    section_ref: str
    statement: str
    modality: str
    source_excerpt: str


@dataclass
class PropertySet:
    rfc_id: str
    title: str
    properties: list[SemanticProperty] = field(default_factory=list)
    skipped_sections: list[str] = field(default_factory=list)  # keyword prefilter
    unprocessed_sections: list[str] = field(default_factory=list)  # LLM failures
    diagnostics: list[str] = field(default_factory=list)
    usage: dict = field(default_factory=lambda: {"input_tokens": 0, "output_tokens": 0, "call_count": 0})


@dataclass(frozen=True)
class ExtractionSettings:
    model_tag: str = "detection-model"
    keyword_prefilter: bool = True  # off for documents predating RFC 2119
    parent_context_chars: int = 1500


def _normalize_modality(raw: str) -> str | None:
    token = raw.strip().upper().replace(" ", "_")
    return token if token in MODALITIES else None


def _validate_entries(entries, section: RfcSection):
    """Split raw reply entries into accepted property dicts and rejection notes."""
    accepted, rejects = [], []
    for pos, entry in enumerate(entries, start=1):
        if not isinstance(entry, dict):
            rejects.append(f"entry {pos}: not an object")
            continue
        statement = str(entry.get("statement", "")).strip()
        excerpt = str(entry.get("source_excerpt", ""))
        modality = _normalize_modality(str(entry.get("modality", "")))
        if not statement:
            rejects.append(f"entry {pos}: empty statement")
            continue
        if modality is None:
            rejects.append(f"entry {pos}: modality {entry.get('modality')!r} is not mandatory-class")
            continue
        if not excerpt or excerpt not in section.body:
            rejects.append(f"entry {pos}: source_excerpt is not verbatim in section {section.number}")
            continue
        accepted.append({"statement": statement, "modality": modality, "source_excerpt": excerpt})
    return accepted, rejects


def extract_properties(
    section: RfcSection,
    rfc_id: str,
    client: LlmClient,
    settings: ExtractionSettings | None = None,
    parent_context: str = "",
) -> tuple[list[SemanticProperty], list[str]]:
    """Zero or more mandatory properties for one section, plus diagnostics."""
    settings = settings or ExtractionSettings()
    context_block = ""
    if parent_context.strip():
        context_block = (
            "Context from the parent section (for reference only, do not extract from it):\n"
            + parent_context.strip()[: settings.parent_context_chars]
            + "\n"
        )
    prompt = render(
        "property_extraction",
        rfc_id=rfc_id or "(unidentified document)",
        number=section.number,
        heading=section.heading,
        parent_context=context_block,
        body=section.body.strip(),
    )

    def ask(extra: str):
        reply = client.complete(
            request(settings.model_tag, _SYSTEM, prompt + extra)
        ).text
        block = extract_json_block(reply)
        if block is None or not isinstance(block.get("properties"), list):
            return None
        return block["properties"]

    diagnostics: list[str] = []
    entries = ask("")
    if entries is None:
        entries = ask("\n\n" + FORMAT_REMINDER)
        if entries is None:
            return [], [f"section {section.number}: unparseable extraction reply"]

    accepted, rejects = _validate_entries(entries, section)
    if rejects:
        reminder = (
            "\n\nYour previous reply had invalid entries:\n- "
            + "\n- ".join(rejects)
            + "\nReply again with the full corrected JSON block. source_excerpt "
            "must be copied character-for-character from the section text."
        )
        retry_entries = ask(reminder)
        if retry_entries is not None:
            accepted, rejects = _validate_entries(retry_entries, section)
        diagnostics.extend(
            f"section {section.number}: dropped non-verbatim or invalid entry ({r})"
            for r in rejects
        )

    properties = [
        SemanticProperty(
            property_id=f"{rfc_id}:{section.number}:{ordinal}",
            rfc_id=rfc_id,
            section_ref=section.number,
            statement=e["statement"],
            modality=e["modality"],
            source_excerpt=e["source_excerpt"],
        )
        for ordinal, e in enumerate(accepted, start=1)
    ]
    return properties, diagnostics


def _leaf_sections(doc: RfcDocument):
    for section in doc.walk():
        if section.is_leaf:
            yield section


def _parent_of(doc: RfcDocument, number: str) -> RfcSection | None:
    parts = number.split(".")
    for cut in range(len(parts) - 1, 0, -1):
        parent = doc.section(".".join(parts[:cut]))
        if parent is not None:
            return parent
    return None


def extract_document_properties(
    doc: RfcDocument, client: LlmClient, settings: ExtractionSettings | None = None
) -> PropertySet:
    """Run extraction over every leaf subsection, honoring the keyword prefilter."""
    settings = settings or ExtractionSettings()
    result = PropertySet(rfc_id=doc.rfc_id, title=doc.title)
    mark = client.mark()
    for section in _leaf_sections(doc):
        if not section.body.strip():
            continue
        if settings.keyword_prefilter and not any(
            kw in section.body for kw in MANDATORY_KEYWORDS
        ):
            result.skipped_sections.append(section.number)
            continue
        parent = _parent_of(doc, section.number)
        try:
            props, diags = extract_properties(
                section,
                doc.rfc_id,
                client,
                settings,
                parent_context=parent.body if parent else "",
            )
        except Exception as exc:  # per-section isolation; the audit summary reports it
            result.unprocessed_sections.append(section.number)
            result.diagnostics.append(f"section {section.number}: extraction failed: {exc}")
            continue
        result.properties.extend(props)
        result.diagnostics.extend(diags)
    usage = client.usage(since=mark)
    result.usage = {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "call_count": usage.call_count,
    }
    return result


# --- persistence ---------------------------------------------------------------


def save_properties(props: PropertySet, path: str | Path) -> None:
    payload = {
        "version": PROPERTIES_VERSION,
        "rfc_id": props.rfc_id,
        "title": props.title,
        "properties": [
            {
                "property_id": p.property_id,
                "rfc_id": p.rfc_id,
                "section_ref": p.section_ref,
                "statement": p.statement,
                "modality": p.modality,
                "source_excerpt": p.source_excerpt,
            }
            for p in props.properties
        ],
        "skipped_sections": props.skipped_sections,
        "unprocessed_sections": props.unprocessed_sections,
        "diagnostics": props.diagnostics,
        "usage": props.usage,
    }
    atomic_write_text(Path(path), dump_json_stable(payload))


def load_properties(path: str | Path) -> PropertySet:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ArtifactFormatError(f"corrupt properties file {path}: {exc}") from exc
    if data.get("version") != PROPERTIES_VERSION:
        raise ArtifactVersionError(
            f"properties file {path} has version {data.get('version')}, expected "
            f"{PROPERTIES_VERSION}; re-run 'rfc-audit properties'"
        )
    return PropertySet(
        rfc_id=data["rfc_id"],
        title=data["title"],
        properties=[SemanticProperty(**p) for p in data["properties"]],
        skipped_sections=data["skipped_sections"],
        unprocessed_sections=data["unprocessed_sections"],
        diagnostics=data["diagnostics"],
        usage=data["usage"],
    )
