"""Hierarchical semantic index: function, file, directory, and repository
summaries built bottom-up over the code model.

Node hashes form a Merkle tree: a function hashes its body bytes, a file
hashes its children plus the non-function remainder of its text, an inner
node hashes its children. Incremental updates re-summarize exactly the nodes
whose hash changed, which for a single edited function is its root path.

Function nodes are keyed by path, name, and same-name ordinal rather than by
byte offset, so an edit that shifts later functions in the file does not
invalidate their summaries.
"""

from __future__ import annotations

import datetime as _dt
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path, PurePosixPath

from .cmodel import CodebaseModel, FunctionRecord
from .errors import ArtifactFormatError, IndexModelMismatchError, ArtifactVersionError
from .llm import LlmClient, request
from .prompts import render
from .util import atomic_write_text, dump_json_stable, elide_middle, sha256_text, truncate_words

INDEX_VERSION = 1

ROOT_ID = "."


@dataclass(frozen=True)
class IndexNode:
    node_id: str
    kind: str  # function | file | directory | repo
    name: str
    summary: str
    children: tuple[str, ...]
    content_hash: str
    model_tag: str = ""
    summary_missing: bool = False


@dataclass
class SemanticIndex:
    root_label: str
    nodes: dict[str, IndexNode]
    root: str = ROOT_ID
    version: int = INDEX_VERSION
    created_at: str = ""
    updated_at: str = ""
    usage: dict = field(default_factory=lambda: {"input_tokens": 0, "output_tokens": 0, "call_count": 0})

    def node(self, node_id: str) -> IndexNode:
        return self.nodes[node_id]

    @property
    def gaps(self) -> list[str]:
        return sorted(n.node_id for n in self.nodes.values() if n.summary_missing)


@dataclass(frozen=True)
class IndexerSettings:
    model_tag: str = "index-model"
    parallelism: int = 1
    function_word_cap: int = 80
    file_word_cap: int = 120
    directory_word_cap: int = 150
    prompt_char_cap: int = 16000  # oversized bodies are elided head+tail


# --- skeleton ----------------------------------------------------------------


@dataclass
class _Skeleton:
    """Structure and hashes derived purely from the model, before any summaries."""

    nodes: dict[str, IndexNode]  # summaries empty
    fn_records: dict[str, FunctionRecord]  # function node id -> record
    file_residue: dict[str, str]  # file node id -> non-function text


def function_node_id(path: str, name: str, ordinal: int) -> str:
    return f"{path}::{name}#{ordinal}"


def build_skeleton(model: CodebaseModel) -> _Skeleton:
    nodes: dict[str, IndexNode] = {}
    fn_records: dict[str, FunctionRecord] = {}
    file_residue: dict[str, str] = {}
    file_children: dict[str, list[str]] = {}

    for unit in model.units:
        funcs = model.functions_in(unit.path)
        seen: dict[str, int] = {}
        child_ids: list[str] = []
        for fn in funcs:
            ordinal = seen.get(fn.name, 0)
            seen[fn.name] = ordinal + 1
            node_id = function_node_id(unit.path, fn.name, ordinal)
            fn_records[node_id] = fn
            child_ids.append(node_id)
            nodes[node_id] = IndexNode(
                node_id=node_id,
                kind="function",
                name=fn.name,
                summary="",
                children=(),
                content_hash=sha256_text(fn.body_text),
            )
        raw = (Path(model.root) / unit.path).read_bytes().decode("latin-1")
        residue_parts = []
        cursor = 0
        for fn in funcs:
            residue_parts.append(raw[cursor:fn.body_span[0]])
            cursor = fn.body_span[1]
        residue_parts.append(raw[cursor:])
        residue = "".join(residue_parts)
        file_residue[unit.path] = residue
        file_hash = sha256_text(
            "\x00".join([nodes[c].content_hash for c in child_ids] + [sha256_text(residue)])
        )
        nodes[unit.path] = IndexNode(
            node_id=unit.path,
            kind="file",
            name=PurePosixPath(unit.path).name,
            summary="",
            children=tuple(child_ids),
            content_hash=file_hash,
        )
        file_children[unit.path] = child_ids

    # directory nodes for every ancestor of a scanned file
    dir_children: dict[str, set[str]] = {ROOT_ID: set()}
    for unit in model.units:
        parts = PurePosixPath(unit.path).parts
        parent = ROOT_ID
        for depth in range(len(parts) - 1):
            dirpath = "/".join(parts[: depth + 1])
            dir_children.setdefault(parent, set()).add(dirpath)
            dir_children.setdefault(dirpath, set())
            parent = dirpath
        dir_children.setdefault(parent, set()).add(unit.path)

    dirs_deepest_first = sorted(
        (d for d in dir_children if d != ROOT_ID),
        key=lambda d: (-d.count("/"), d),
    )
    for dir_id in dirs_deepest_first:
        if dir_id in nodes:  # a file, already built
            continue
        children = tuple(sorted(dir_children[dir_id]))
        nodes[dir_id] = IndexNode(
            node_id=dir_id,
            kind="directory",
            name=PurePosixPath(dir_id).name,
            summary="",
            children=children,
            content_hash=sha256_text(
                "\x00".join(f"{c}={nodes[c].content_hash}" for c in children)
            ),
        )
    root_children = tuple(sorted(dir_children[ROOT_ID]))
    nodes[ROOT_ID] = IndexNode(
        node_id=ROOT_ID,
        kind="repo",
        name=model.root_label,
        summary="",
        children=root_children,
        content_hash=sha256_text(
            "\x00".join(f"{c}={nodes[c].content_hash}" for c in root_children)
        ),
    )
    return _Skeleton(nodes=nodes, fn_records=fn_records, file_residue=file_residue)


# --- summarization ------------------------------------------------------------


def summarize_function(
    fn: FunctionRecord, client: LlmClient, settings: IndexerSettings
) -> str:
    """One concise behavior summary; the prompt carries the full function text."""
    body = elide_middle(fn.body_text, settings.prompt_char_cap)
    prompt = render(
        "function_summary",
        path=fn.path,
        name=fn.name,
        body=body,
        cap=settings.function_word_cap,
    )
    reply = client.complete(request(settings.model_tag, _SYSTEM, prompt)).text
    return truncate_words(reply, settings.function_word_cap)


def summarize_file(
    path: str,
    child_lines: list[str],
    residue: str,
    client: LlmClient,
    settings: IndexerSettings,
) -> str:
    """File summary from child function summaries; raw text when there are none."""
    if child_lines:
        prompt = render(
            "file_summary",
            path=path,
            children="\n".join(child_lines),
            cap=settings.file_word_cap,
        )
    else:
        prompt = render(
            "file_raw_summary",
            path=path,
            body=elide_middle(residue, settings.prompt_char_cap),
            cap=settings.file_word_cap,
        )
    reply = client.complete(request(settings.model_tag, _SYSTEM, prompt)).text
    return truncate_words(reply, settings.file_word_cap)


def summarize_directory(
    label: str, child_lines: list[str], client: LlmClient, settings: IndexerSettings
) -> str:
    """Directory summary from file/subdirectory summaries; the repository root
    is the top-level directory case."""
    prompt = render(
        "directory_summary",
        label=label,
        children="\n".join(child_lines),
        cap=settings.directory_word_cap,
    )
    reply = client.complete(request(settings.model_tag, _SYSTEM, prompt)).text
    return truncate_words(reply, settings.directory_word_cap)


_SYSTEM = "You summarize source code precisely and concisely for a code index."


def _child_line(node: IndexNode) -> str:
    marker = {"function": "fn", "file": "file", "directory": "dir"}.get(node.kind, node.kind)
    summary = node.summary if (node.summary and not node.summary_missing) else "(unsummarized)"
    return f"- [{marker}] {node.name}: {summary}"


def _summarize_nodes(
    skeleton: _Skeleton,
    todo: set[str],
    client: LlmClient,
    settings: IndexerSettings,
) -> dict[str, IndexNode]:
    """Fill summaries for `todo` node ids, level by level, bottom-up."""
    nodes = dict(skeleton.nodes)

    def finish(node_id: str, summary: str | None) -> None:
        if summary is None:
            nodes[node_id] = replace(
                nodes[node_id], summary="", summary_missing=True, model_tag=settings.model_tag
            )
        else:
            nodes[node_id] = replace(
                nodes[node_id], summary=summary, summary_missing=False,
                model_tag=settings.model_tag,
            )

    def attempt(fn):
        try:
            return fn()
        except Exception:
            return None

    fn_ids = sorted(n for n in todo if nodes[n].kind == "function")
    workers = max(1, settings.parallelism)
    if client.serial_only:
        workers = 1
    if workers > 1 and len(fn_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda nid: attempt(
                        lambda: summarize_function(skeleton.fn_records[nid], client, settings)
                    ),
                    fn_ids,
                )
            )
        for nid, summary in zip(fn_ids, results):
            finish(nid, summary)
    else:
        for nid in fn_ids:
            finish(nid, attempt(lambda: summarize_function(skeleton.fn_records[nid], client, settings)))

    for nid in sorted(n for n in todo if nodes[n].kind == "file"):
        node = nodes[nid]
        child_lines = [_child_line(nodes[c]) for c in node.children]
        finish(
            nid,
            attempt(
                lambda: summarize_file(
                    nid, child_lines, skeleton.file_residue.get(nid, ""), client, settings
                )
            ),
        )

    dir_ids = sorted(
        (n for n in todo if nodes[n].kind == "directory"),
        key=lambda d: (-d.count("/"), d),
    )
    for nid in dir_ids:
        node = nodes[nid]
        child_lines = [_child_line(nodes[c]) for c in node.children]
        finish(
            nid,
            attempt(lambda: summarize_directory(f"directory {nid}", child_lines, client, settings)),
        )

    if ROOT_ID in todo:
        node = nodes[ROOT_ID]
        child_lines = [_child_line(nodes[c]) for c in node.children]
        finish(
            ROOT_ID,
            attempt(
                lambda: summarize_directory(
                    f"the repository root ({node.name})", child_lines, client, settings
                )
            ),
        )
    return nodes


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def build_index(
    model: CodebaseModel, client: LlmClient, settings: IndexerSettings | None = None
) -> SemanticIndex:
    """Summarize every function, file, directory, and the repository root.

    Mock-ledger arithmetic: one call per function, per file, per directory,
    plus one for the root.
    """
    settings = settings or IndexerSettings()
    skeleton = build_skeleton(model)
    mark = client.mark()
    nodes = _summarize_nodes(skeleton, set(skeleton.nodes), client, settings)
    usage = client.usage(since=mark)
    stamp = _now()
    return SemanticIndex(
        root_label=model.root_label,
        nodes=nodes,
        created_at=stamp,
        updated_at=stamp,
        usage={
            "input_tokens": usage.input_tokens,
            "output_tokens": usage.output_tokens,
            "call_count": usage.call_count,
        },
    )


def update_index(
    index: SemanticIndex,
    model: CodebaseModel,
    client: LlmClient,
    settings: IndexerSettings | None = None,
) -> SemanticIndex:
    """Re-summarize exactly the nodes whose content hash changed (plus new ones);
    everything else is reused without an LLM call."""
    settings = settings or IndexerSettings()
    if index.root_label != model.root_label:
        raise IndexModelMismatchError(
            f"index was built for '{index.root_label}', model is '{model.root_label}'"
        )
    skeleton = build_skeleton(model)
    todo: set[str] = set()
    for node_id, fresh in skeleton.nodes.items():
        old = index.nodes.get(node_id)
        if old is None or old.content_hash != fresh.content_hash or old.summary_missing:
            todo.add(node_id)
        else:
            skeleton.nodes[node_id] = replace(
                fresh, summary=old.summary, model_tag=old.model_tag
            )
    mark = client.mark()
    nodes = _summarize_nodes(skeleton, todo, client, settings)
    usage = client.usage(since=mark)
    return SemanticIndex(
        root_label=index.root_label,
        nodes=nodes,
        created_at=index.created_at,
        updated_at=_now() if todo else index.updated_at,
        usage={
            "input_tokens": index.usage["input_tokens"] + usage.input_tokens,
            "output_tokens": index.usage["output_tokens"] + usage.output_tokens,
            "call_count": index.usage["call_count"] + usage.call_count,
        },
    )


def changed_nodes(index: SemanticIndex, model: CodebaseModel) -> set[str]:
    """Node ids update_index would re-summarize, without touching the LLM."""
    skeleton = build_skeleton(model)
    out = set()
    for node_id, fresh in skeleton.nodes.items():
        old = index.nodes.get(node_id)
        if old is None or old.content_hash != fresh.content_hash or old.summary_missing:
            out.add(node_id)
    return out


# --- persistence -----------------------------------------------------------------


def persist_index(index: SemanticIndex, path: str | Path) -> None:
    payload = {
        "version": index.version,
        "root": index.root,
        "root_label": index.root_label,
        "created_at": index.created_at,
        "updated_at": index.updated_at,
        "usage": index.usage,
        "nodes": {
            n.node_id: {
                "kind": n.kind,
                "name": n.name,
                "summary": n.summary,
                "children": list(n.children),
                "content_hash": n.content_hash,
                "model_tag": n.model_tag,
                "summary_missing": n.summary_missing,
            }
            for n in index.nodes.values()
        },
    }
    atomic_write_text(Path(path), dump_json_stable(payload))


def load_index(path: str | Path) -> SemanticIndex:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ArtifactFormatError(f"corrupt index file {path}: {exc}") from exc
    if not isinstance(data, dict) or "version" not in data:
        raise ArtifactFormatError(f"not an index file: {path}")
    if data["version"] != INDEX_VERSION:
        raise ArtifactVersionError(
            f"index {path} has schema version {data['version']}, this build reads "
            f"{INDEX_VERSION}; re-run 'rfc-audit index' to rebuild it"
        )
    nodes = {
        node_id: IndexNode(
            node_id=node_id,
            kind=raw["kind"],
            name=raw["name"],
            summary=raw["summary"],
            children=tuple(raw["children"]),
            content_hash=raw["content_hash"],
            model_tag=raw.get("model_tag", ""),
            summary_missing=raw.get("summary_missing", False),
        )
        for node_id, raw in data["nodes"].items()
    }
    return SemanticIndex(
        root_label=data["root_label"],
        nodes=nodes,
        root=data["root"],
        version=data["version"],
        created_at=data["created_at"],
        updated_at=data["updated_at"],
        usage=data["usage"],
    )
