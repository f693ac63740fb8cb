"""Layered configuration: defaults, then config file, then CLI flags, then
environment variables — later layers win. `rfc-audit config show` prints the
effective result so a run is reproducible from its printed config."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError

ENV_PREFIX = "RFC_AUDIT_"

TOOL_ALIASES = {
    "query": "query",
    "callee": "query_callee",
    "query_callee": "query_callee",
    "caller": "query_caller",
    "query_caller": "query_caller",
}


@dataclass(frozen=True)
class Config:
    repo: str = ""
    include: tuple = ("**/*.c", "**/*.h")
    exclude: tuple = ()
    index_path: str = "index.json"
    index_model: str = "index-model"
    detection_model: str = "detection-model"
    backend: str = "live"  # live | record | replay | mock
    cassette: str = ""
    api_base: str = "https://api.openai.com/v1"
    api_key_env: str = "RFC_AUDIT_API_KEY"
    max_retries: int = 3
    rate_input_per_mtok: float = 3.0
    rate_output_per_mtok: float = 15.0
    parallelism: int = 1
    max_retrieval: int = 6
    max_gathered: int = 25
    token_budget: int = 300_000
    prompt_token_budget: int = 24_000
    fanout_dirs: int = 4
    fanout_files: int = 6
    fanout_functions: int = 8
    function_word_cap: int = 80
    file_word_cap: int = 120
    directory_word_cap: int = 150
    keyword_prefilter: bool = True
    no_semantic_index: bool = False
    no_retrieval: bool = False
    no_validation: bool = False
    disabled_tools: tuple = ()

    def as_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


def _coerce(name: str, kind: type, value):
    if kind is bool:
        if isinstance(value, bool):
            return value
        token = str(value).strip().lower()
        if token in ("1", "true", "yes", "on"):
            return True
        if token in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config field {name}: cannot read {value!r} as a boolean")
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    if kind is tuple:
        if isinstance(value, (list, tuple)):
            return tuple(value)
        return tuple(s.strip() for s in str(value).split(",") if s.strip())
    return str(value)


_FIELD_TYPES = {
    "include": tuple, "exclude": tuple, "disabled_tools": tuple,
    "max_retries": int, "parallelism": int, "max_retrieval": int,
    "max_gathered": int, "token_budget": int, "prompt_token_budget": int,
    "fanout_dirs": int, "fanout_files": int, "fanout_functions": int,
    "function_word_cap": int, "file_word_cap": int, "directory_word_cap": int,
    "rate_input_per_mtok": float, "rate_output_per_mtok": float,
    "keyword_prefilter": bool, "no_semantic_index": bool,
    "no_retrieval": bool, "no_validation": bool,
}


def _field_type(name: str) -> type:
    return _FIELD_TYPES.get(name, str)


def normalize_tools(raw) -> tuple:
    out = []
    for token in raw:
        alias = TOOL_ALIASES.get(str(token).strip().lower())
        if alias is None:
            raise ConfigError(
                f"unknown tool {token!r}; expected one of query, callee, caller"
            )
        if alias not in out:
            out.append(alias)
    return tuple(out)


def load_config(
    config_file: str | Path | None = None,
    flags: dict | None = None,
    env: dict | None = None,
) -> Config:
    """defaults <- config file <- flags <- environment, later layers win."""
    names = {f.name for f in fields(Config)}
    merged: dict = {}

    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
        for key, value in data.items():
            if key not in names:
                raise ConfigError(f"config file {path}: unknown key {key!r}")
            merged[key] = _coerce(key, _field_type(key), value)

    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in names:
            raise ConfigError(f"unknown config field from flags: {key!r}")
        merged[key] = _coerce(key, _field_type(key), value)

    env = os.environ if env is None else env
    for key in sorted(names):
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            merged[key] = _coerce(key, _field_type(key), env[env_key])

    if "disabled_tools" in merged:
        merged["disabled_tools"] = normalize_tools(merged["disabled_tools"])

    cfg = Config(**merged)
    if cfg.backend not in ("live", "record", "replay", "mock"):
        raise ConfigError(
            f"backend must be one of live, record, replay, mock (got {cfg.backend!r})"
        )
    if cfg.backend in ("record", "replay") and not cfg.cassette:
        raise ConfigError(f"backend {cfg.backend!r} requires a cassette path")
    return cfg
