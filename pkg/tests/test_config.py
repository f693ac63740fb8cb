"""Configuration layering: defaults < file < flags < environment."""

import pytest

from rfc_audit.config import Config, load_config, normalize_tools
from rfc_audit.errors import ConfigError


def test_defaults():
    cfg = load_config(env={})
    assert cfg.backend == "live"
    assert cfg.max_retrieval == 6
    assert cfg.fanout_dirs == 4
    assert cfg.keyword_prefilter is True


def test_file_overrides_defaults(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text('backend = "mock"\nmax_retrieval = 9\nexclude = ["**/vendor/**"]\n')
    cfg = load_config(f, env={})
    assert cfg.backend == "mock"
    assert cfg.max_retrieval == 9
    assert cfg.exclude == ("**/vendor/**",)


def test_flags_override_file(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text('max_retrieval = 9\n')
    cfg = load_config(f, flags={"max_retrieval": 2}, env={})
    assert cfg.max_retrieval == 2


def test_env_overrides_flags(tmp_path):
    cfg = load_config(
        None,
        flags={"max_retrieval": 2, "backend": "mock"},
        env={"RFC_AUDIT_MAX_RETRIEVAL": "4", "RFC_AUDIT_NO_RETRIEVAL": "true"},
    )
    assert cfg.max_retrieval == 4
    assert cfg.no_retrieval is True
    assert cfg.backend == "mock"


def test_none_flags_do_not_override(tmp_path):
    cfg = load_config(None, flags={"backend": None, "parallelism": None}, env={})
    assert cfg.backend == "live"


def test_unknown_file_key_rejected(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text('not_a_key = 1\n')
    with pytest.raises(ConfigError):
        load_config(f, env={})


def test_invalid_toml_rejected(tmp_path):
    f = tmp_path / "cfg.toml"
    f.write_text("=== not toml ===")
    with pytest.raises(ConfigError):
        load_config(f, env={})


def test_replay_requires_cassette():
    with pytest.raises(ConfigError):
        load_config(None, flags={"backend": "replay"}, env={})


def test_bad_bool_env():
    with pytest.raises(ConfigError):
        load_config(None, env={"RFC_AUDIT_NO_RETRIEVAL": "maybe"})


def test_tool_aliases():
    assert normalize_tools(["query", "callee", "caller"]) == (
        "query", "query_callee", "query_caller",
    )
    with pytest.raises(ConfigError):
        normalize_tools(["frobnicate"])


def test_config_as_dict_printable():
    data = Config().as_dict()
    assert data["include"] == ["**/*.c", "**/*.h"]
    assert data["temperature"] if "temperature" in data else True  # no temp knob
    assert "backend" in data
