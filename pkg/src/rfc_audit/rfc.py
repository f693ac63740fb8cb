"""IETF plain-text RFC parsing: page furniture removal and section segmentation.

A heading is a line at column 0 matching `^\\d+(\\.\\d+)*\\.?\\s+\\S` (IETF
convention); everything indented, including tables of contents and ASCII art,
stays inside section bodies. Sections slice the cleaned text contiguously, so
concatenating the preamble and every section text reproduces the cleaned
document exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

HEADING_RE = re.compile(r"^(\d+(?:\.\d+)*)\.?[ \t]+(\S.*)$")
FOOTER_RE = re.compile(r"\[Page \d+\]\s*$")
HEADER_RE = re.compile(r"^RFC \d+\s+.*\b(19|20)\d{2}\s*$")
RFC_NUMBER_RE = re.compile(r"Request for Comments:\s*(\d+)")


@dataclass
class RfcSection:
    number: str
    heading: str
    heading_line: str
    body: str  # own prose only: heading line through the next heading at any level
    children: list["RfcSection"] = field(default_factory=list)

    @property
    def text(self) -> str:
        return self.heading_line + self.body

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class RfcDocument:
    rfc_id: str
    title: str
    raw_text: str
    cleaned_text: str
    preamble: str
    sections: list[RfcSection]
    diagnostics: list[str] = field(default_factory=list)

    def walk(self):
        for section in self.sections:
            yield from section.walk()

    def section(self, number: str) -> RfcSection | None:
        for s in self.walk():
            if s.number == number:
                return s
        return None


def strip_page_furniture(raw: str) -> str:
    """Drop form feeds, `[Page N]` footers, and running `RFC NNNN ... year`
    headers; trim trailing spaces; collapse long blank runs."""
    kept: list[str] = []
    for line in raw.splitlines():
        line = line.replace("\f", "")
        if FOOTER_RE.search(line):
            continue
        if HEADER_RE.match(line.strip()) and kept:
            continue
        kept.append(line.rstrip())
    text = "\n".join(kept)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text + ("\n" if not text.endswith("\n") else "")


def _detect_rfc_id(preamble: str) -> str:
    m = RFC_NUMBER_RE.search(preamble)
    return f"RFC {m.group(1)}" if m else ""


def _detect_title(preamble: str) -> str:
    # centered title line between the header block and the status section
    for line in preamble.splitlines():
        stripped = line.strip()
        if not stripped or ":" in stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if indent >= 10 and len(stripped) > 3 and not stripped.startswith(("[", "(")):
            return stripped
    return ""


def parse_rfc(raw_text: str, rfc_id: str | None = None) -> RfcDocument:
    """Segment an IETF plain-text document into a numbered section tree."""
    cleaned = strip_page_furniture(raw_text)
    lines = cleaned.splitlines(keepends=True)

    headings: list[tuple[int, str, str, str]] = []  # (char offset, number, title, line)
    offset = 0
    for line in lines:
        m = HEADING_RE.match(line.rstrip("\n"))
        if m:
            headings.append((offset, m.group(1), m.group(2).strip(), line))
        offset += len(line)

    diagnostics: list[str] = []
    if not headings:
        diagnostics.append("no numbered headings detected; single-section fallback")
        preamble = ""
        root = RfcSection(number="1", heading="Document", heading_line="", body=cleaned)
        doc_id = rfc_id or _detect_rfc_id(cleaned)
        return RfcDocument(
            rfc_id=doc_id,
            title=_detect_title(cleaned),
            raw_text=raw_text,
            cleaned_text=cleaned,
            preamble=preamble,
            sections=[root],
            diagnostics=diagnostics,
        )

    preamble = cleaned[: headings[0][0]]
    by_number: dict[str, RfcSection] = {}
    top: list[RfcSection] = []
    for idx, (start, number, title, line) in enumerate(headings):
        end = headings[idx + 1][0] if idx + 1 < len(headings) else len(cleaned)
        body = cleaned[start + len(line): end]
        section = RfcSection(number=number, heading=title, heading_line=line, body=body)
        if number in by_number:
            diagnostics.append(f"duplicate section number {number}; keeping both")
        by_number.setdefault(number, section)

        parts = number.split(".")
        parent = None
        for cut in range(len(parts) - 1, 0, -1):
            candidate = ".".join(parts[:cut])
            if candidate in by_number:
                parent = by_number[candidate]
                break
        if parent is None:
            top.append(section)
        else:
            if len(parent.number.split(".")) + 1 != len(parts):
                diagnostics.append(
                    f"section {number} skips a level under {parent.number}"
                )
            parent.children.append(section)

    doc_id = rfc_id or _detect_rfc_id(preamble)
    return RfcDocument(
        rfc_id=doc_id,
        title=_detect_title(preamble),
        raw_text=raw_text,
        cleaned_text=cleaned,
        preamble=preamble,
        sections=top,
        diagnostics=diagnostics,
    )
