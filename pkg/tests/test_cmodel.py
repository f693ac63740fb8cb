"""Subject code model: scanning, lookups, call graph, oracle equivalence."""

from pathlib import Path

import pytest

from rfc_audit.cmodel import (
    CodebaseModel,
    FunctionRecord,
    MacroRecord,
    TypeRecord,
    is_external_call,
    lookup_definition,
    resolve_callees,
    resolve_callers,
    scan_repository,
    sites_at_line,
)
from rfc_audit.errors import EmptyModelError, UnknownEntityError

from callgraph_oracle import oracle_edges


def model_for(repo: Path) -> CodebaseModel:
    return scan_repository(repo)


# --- scanning ---------------------------------------------------------------


def test_scan_basic_counts(basic_repo):
    model = model_for(basic_repo)
    assert len(model.units) == 3
    assert len(model.functions) == 12
    names = sorted(f.name for f in model.functions)
    assert names == sorted(
        [
            "find_best_route", "route_install", "route_lost", "route_expire_all",
            "encode_message", "decode_message", "send_update", "broadcast_updates",
            "timer_now", "timer_advance", "timer_schedule", "timer_fire_expired",
        ]
    )


def test_scan_empty_directory_is_an_error(tmp_path):
    with pytest.raises(EmptyModelError):
        scan_repository(tmp_path)


def test_scan_deterministic(basic_repo):
    first = model_for(basic_repo)
    second = model_for(basic_repo)
    assert first.units == second.units
    assert first.functions == second.functions
    assert first.call_sites == second.call_sites
    assert first.call_graph == second.call_graph


def test_scan_ordering_lexicographic(edge_repo):
    model = model_for(edge_repo)
    assert [u.path for u in model.units] == sorted(u.path for u in model.units)
    for path in {f.path for f in model.functions}:
        starts = [f.body_span[0] for f in model.functions if f.path == path]
        assert starts == sorted(starts)


def test_unreadable_file_becomes_diagnostic(basic_repo_copy, monkeypatch):
    bad = (basic_repo_copy / "src" / "timer.c").resolve()
    real = Path.read_bytes

    def flaky(self):
        if self.resolve() == bad:
            raise OSError("permission denied (simulated)")
        return real(self)

    monkeypatch.setattr(Path, "read_bytes", flaky)
    model = scan_repository(basic_repo_copy)
    assert len(model.units) == 2
    assert any("timer.c" in d.path for d in model.diagnostics)


def test_variadic_arity_counts_fixed_params_only(edge_repo):
    model = model_for(edge_repo)
    log_msg = [f for f in model.functions if f.name == "log_msg"]
    assert len(log_msg) == 1
    assert log_msg[0].arity == 2
    assert log_msg[0].is_variadic


def test_ifdef_duplicates_are_both_indexed(edge_repo):
    model = model_for(edge_repo)
    checksums = [f for f in model.functions if f.name == "checksum"]
    assert len(checksums) == 2
    assert all(f.arity == 2 for f in checksums)


def test_static_flag(collide_repo):
    model = model_for(collide_repo)
    by_name = {}
    for f in model.functions:
        by_name.setdefault(f.name, []).append(f)
    assert all(f.is_static for f in by_name["init"])
    assert not by_name["main"][0].is_static


# --- lookups ----------------------------------------------------------------


def test_lookup_struct_definition_verbatim(basic_repo):
    model = model_for(basic_repo)
    hits = lookup_definition(model, "route_entry")
    assert len(hits) == 1
    rec = hits[0]
    assert isinstance(rec, TypeRecord) and rec.kind == "struct"
    raw = (basic_repo / rec.path).read_bytes().decode("latin-1")
    assert rec.definition_text == raw[rec.span[0]:rec.span[1]]
    assert rec.definition_text.startswith("struct route_entry")


def test_lookup_absent_name_is_empty(basic_repo):
    assert lookup_definition(model_for(basic_repo), "NO_SUCH_NAME") == []


def test_lookup_macro_defined_in_two_headers(edge_repo):
    model = model_for(edge_repo)
    hits = lookup_definition(model, "BUF_LEN")
    assert len(hits) == 2
    assert all(isinstance(h, MacroRecord) for h in hits)
    assert sorted(h.path for h in hits) == ["defs1.h", "defs2.h"]


def test_lookup_covers_typedef_enum_union(edge_repo):
    model = model_for(edge_repo)
    assert any(h.kind == "typedef" for h in lookup_definition(model, "u32"))
    assert any(h.kind == "enum" for h in lookup_definition(model, "level"))
    assert any(h.kind == "union" for h in lookup_definition(model, "value"))
    assert any(h.kind == "typedef" for h in lookup_definition(model, "handler_fn"))


def test_lookup_mixes_functions_and_types(basic_repo):
    model = model_for(basic_repo)
    hits = lookup_definition(model, "send_update")
    assert len(hits) == 1
    assert isinstance(hits[0], FunctionRecord)


# --- callee / caller resolution ----------------------------------------------


def _site(model, caller_name, callee_name):
    caller = next(f for f in model.functions if f.name == caller_name)
    return next(s for s in model.sites_of(caller.id) if s.callee_name == callee_name)


def test_resolve_callee_cross_file(basic_repo):
    model = model_for(basic_repo)
    site = _site(model, "route_lost", "send_update")
    hits = resolve_callees(model, site)
    assert [f.name for f in hits] == ["send_update"]
    assert hits[0].path == "src/message.c"
    assert not is_external_call(model, site)


def test_resolve_callee_libc_is_external(collide_repo):
    model = model_for(collide_repo)
    site = _site(model, "run_all", "printf")
    assert resolve_callees(model, site) == []
    assert is_external_call(model, site)


def test_resolve_callee_collision_returns_both(collide_repo):
    model = model_for(collide_repo)
    site = _site(model, "run_all", "init")
    hits = resolve_callees(model, site)
    assert sorted(f.path for f in hits) == ["a.c", "b.c"]


def test_resolve_callee_arity_disambiguates(collide_repo):
    model = model_for(collide_repo)
    caller = next(f for f in model.functions if f.name == "run_all")
    helper_sites = [s for s in model.sites_of(caller.id) if s.callee_name == "helper"]
    assert sorted(s.arg_count for s in helper_sites) == [1, 2]
    for site in helper_sites:
        hits = resolve_callees(model, site)
        assert len(hits) == 1
        assert hits[0].arity == site.arg_count


def test_member_pointer_calls_are_external(edge_repo):
    model = model_for(edge_repo)
    site = _site(model, "dispatch", "open")
    assert site.through_member
    assert resolve_callees(model, site) == []


def test_macro_invocation_is_external(edge_repo):
    model = model_for(edge_repo)
    site = _site(model, "use_max", "MAX")
    assert resolve_callees(model, site) == []


def test_resolve_callers_two_sites(basic_repo):
    model = model_for(basic_repo)
    route_lost = next(f for f in model.functions if f.name == "route_lost")
    callers = resolve_callers(model, route_lost.id)
    assert sorted(c.name for c, _ in callers) == ["route_expire_all", "timer_fire_expired"]
    for caller, site in callers:
        assert site.caller_id == caller.id
        assert caller.body_span[0] <= site.span[0] < site.span[1] <= caller.body_span[1]


def test_resolve_callers_uncalled_is_empty(collide_repo):
    model = model_for(collide_repo)
    unused = next(f for f in model.functions if f.name == "unused_fn")
    assert resolve_callers(model, unused.id) == []


def test_resolve_callers_recursion_self_edge(collide_repo):
    model = model_for(collide_repo)
    walk = next(f for f in model.functions if f.name == "walk")
    callers = resolve_callers(model, walk.id)
    assert "walk" in [c.name for c, _ in callers]
    assert "main" in [c.name for c, _ in callers]


def test_resolve_callers_unknown_id_is_hard_error(basic_repo):
    with pytest.raises(UnknownEntityError):
        resolve_callers(model_for(basic_repo), "nowhere.c::ghost@0")


def test_sites_at_line(basic_repo):
    model = model_for(basic_repo)
    raw = (basic_repo / "src/route.c").read_text()
    line = next(
        i + 1 for i, ln in enumerate(raw.splitlines()) if "send_update(prefix)" in ln
    )
    sites = sites_at_line(model, "src/route.c", line)
    assert [s.callee_name for s in sites] == ["send_update"]


# --- invariants ---------------------------------------------------------------


def _ordinal_map(pairs):
    """(path, name, position) -> (path, name, ordinal among same name in path)."""
    out = {}
    grouped: dict[tuple, list] = {}
    for path, name, start in pairs:
        grouped.setdefault((path, name), []).append(start)
    for (path, name), starts in grouped.items():
        for ordinal, start in enumerate(sorted(starts)):
            out[(path, name, start)] = (path, name, ordinal)
    return out


@pytest.mark.parametrize("repo", ["basic", "collide", "edge"])
def test_call_graph_matches_bruteforce_oracle(repo):
    root = Path(__file__).parent / "fixtures" / "crepos" / repo
    model = scan_repository(root)
    oracle_defs, oracle, oracle_reverse = oracle_edges(root)

    impl_keys = _ordinal_map(
        (f.path, f.name, f.body_span[0]) for f in model.functions
    )
    oracle_keys = _ordinal_map(
        (d["path"], d["name"], d["start"]) for d in oracle_defs
    )
    assert sorted(impl_keys.values()) == sorted(oracle_keys.values())

    fn_by_id = {f.id: f for f in model.functions}
    impl_edges = []
    for site in model.call_sites:
        cands = tuple(
            sorted(
                impl_keys[(fn_by_id[fid].path, fn_by_id[fid].name, fn_by_id[fid].body_span[0])]
                for fid in model.call_graph.edges[site.id]
            )
        )
        impl_edges.append(
            ((site.id.rsplit("@", 1)[0], site.span[0], site.callee_name, site.arg_count), cands)
        )
    oracle_translated = [
        (call_key, tuple(sorted(oracle_keys[ck] for ck in cands)))
        for call_key, cands in oracle
    ]
    assert sorted(impl_edges) == sorted(oracle_translated)


@pytest.mark.parametrize("repo", ["basic", "collide", "edge"])
def test_transpose_property(repo):
    root = Path(__file__).parent / "fixtures" / "crepos" / repo
    model = scan_repository(root)
    forward = []
    for site in model.call_sites:
        for callee in resolve_callees(model, site):
            forward.append((site.caller_id, callee.id, site.id))
    transposed = []
    for fn in model.functions:
        for caller, site in resolve_callers(model, fn.id):
            transposed.append((caller.id, fn.id, site.id))
    assert sorted(forward) == sorted(transposed)


@pytest.mark.parametrize("repo", ["basic", "collide", "edge"])
def test_byte_exactness_of_every_record(repo):
    root = Path(__file__).parent / "fixtures" / "crepos" / repo
    model = scan_repository(root)
    raw = {
        u.path: (root / u.path).read_bytes().decode("latin-1") for u in model.units
    }
    for f in model.functions:
        assert f.body_text == raw[f.path][f.body_span[0]:f.body_span[1]]
    for t in model.types:
        assert t.definition_text == raw[t.path][t.span[0]:t.span[1]]
    for m in model.macros:
        assert m.definition_text == raw[m.path][m.span[0]:m.span[1]]
    for s in model.call_sites:
        caller = model.function(s.caller_id)
        assert caller.body_span[0] <= s.span[0] < s.span[1] <= caller.body_span[1]


def test_include_exclude_globs(basic_repo):
    model = scan_repository(basic_repo, exclude=("**/timer.c",))
    assert len(model.units) == 2
    with pytest.raises(EmptyModelError):
        scan_repository(basic_repo, include=("**/*.nope",))
