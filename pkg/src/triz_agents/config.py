"""Run configuration: a flat YAML mapping whose keys mirror the ``run`` flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(Exception):
    pass


def _opt(default: Any, help: str) -> Any:
    return field(default=default, metadata={"help": help})


@dataclass
class RunConfig:
    backend: str = _opt("live", "chat backend: live or scripted")
    script: str | None = _opt(None, "script file for the scripted backend")
    model: str = _opt("gpt-4o", "model name sent to the live endpoint")
    temperature: float = _opt(0.5, "sampling temperature for every agent")
    base_url: str = _opt("https://api.openai.com/v1", "base URL of the OpenAI-compatible endpoint")
    api_key_env: str = _opt("OPENAI_API_KEY", "environment variable holding the API key")
    timeout: float = _opt(60.0, "per-request timeout in seconds")
    max_retries: int = _opt(3, "retries on transport errors, timeouts and 5xx responses")
    search: str | None = _opt(None, "web search mode: fixture or live (default: follows the backend)")
    search_fixtures: str | None = _opt(None, "JSON file with canned search results, keyed by query")
    search_api_key_env: str = _opt("TAVILY_API_KEY", "environment variable holding the search API key")
    search_results: int = _opt(5, "number of web search results per query")
    rag_corpus: str | None = _opt(None, "directory of .txt/.md TRIZ documents for the retrieval tool")
    rag_top_k: int = _opt(4, "number of passages the retrieval tool returns")
    team_file: str | None = _opt(None, "team roster YAML (default: bundled team)")
    prompts_dir: str | None = _opt(None, "directory with prompt templates and agent profiles")
    workflow_file: str | None = _opt(None, "workflow definition YAML (default: bundled six-step workflow)")
    output_dir: str = _opt("runs", "directory that receives one sub-directory per run")
    run_id: str | None = _opt(None, "name of the run directory (default: timestamp plus random suffix)")
    max_node_calls_per_step: int = _opt(25, "node-call budget of one workflow step")
    max_tool_rounds_per_turn: int = _opt(4, "tool rounds an agent may use in one turn")
    max_router_retries: int = _opt(2, "re-asks when the supervisor's decision cannot be parsed")
    max_total_tokens: int | None = _opt(None, "abort the run above this many tokens (default: unlimited)")

    def __post_init__(self) -> None:
        if self.backend not in ("live", "scripted"):
            raise ConfigError(f"backend must be 'live' or 'scripted', not {self.backend!r}")
        if self.search not in (None, "fixture", "live"):
            raise ConfigError(f"search must be 'fixture' or 'live', not {self.search!r}")
        if self.backend == "scripted" and not self.script:
            raise ConfigError("the scripted backend needs a script file (--script)")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError("temperature must be within [0, 2]")
        for name in ("max_node_calls_per_step", "max_tool_rounds_per_turn", "max_router_retries",
                     "search_results", "rag_top_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_node_calls_per_step < 2:
            raise ConfigError("max_node_calls_per_step must be at least 2")
        if self.max_total_tokens is not None and self.max_total_tokens < 1:
            raise ConfigError("max_total_tokens must be positive")
        if self.max_retries < 0 or self.timeout <= 0:
            raise ConfigError("max_retries must be >= 0 and timeout > 0")

    @property
    def search_mode(self) -> str:
        if self.search:
            return self.search
        return "live" if self.backend == "live" else "fixture"

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes: Any) -> RunConfig:
        return build_config({**self.to_dict(), **changes})


def config_keys() -> list[str]:
    return [f.name for f in fields(RunConfig)]


def config_help() -> dict[str, str]:
    return {f.name: f.metadata["help"] for f in fields(RunConfig)}


def _coerce(name: str, kind: str, value: Any) -> Any:
    if value is None:
        if "None" in kind:
            return None
        raise ConfigError(f"{name} must not be empty")
    base = kind.replace(" | None", "")
    try:
        if base == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if base == "float":
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if base == "str":
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {base}, got {value!r}") from None
    return value


def build_config(values: Mapping[str, Any]) -> RunConfig:
    known = {f.name: f.type for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {k: _coerce(k, str(known[k]), v) for k, v in values.items()}
    return RunConfig(**kwargs)


def read_config_file(path: Path | str) -> dict[str, Any]:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping of keys to values")
    return data


def load_config(path: Path | str | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """File values first, then non-None ``overrides`` on top."""
    values = read_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return build_config(values)
