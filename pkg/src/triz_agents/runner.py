"""Wiring a run from its configuration, and replaying a finished run."""

from __future__ import annotations

import json
import logging
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .agents import ModelSettings, Team, TeamConfigError, load_team
from .config import ConfigError, RunConfig, build_config, read_config_file
from .conversation import FinalReport, mask_timestamps, utc_now
from .knowledge import KnowledgeBase, KnowledgeError, load_knowledge_base
from .llm import AuthMissing, BackendConfig, ChatBackend, RecordingBackend, ScriptError, make_backend
from .report import RunReport
from .tools import RagStore, ToolRegistry, build_registry, load_corpus
from .tools.rag import RagError
from .tools.search import FixtureSearch, MissFixture, SearchError, SearchResult, TavilySearch, normalize_query
from .workflow import (
    FINAL_REPORT_NAME,
    REPORT_NAME,
    TRANSCRIPT_NAME,
    Clock,
    Limits,
    RunAborted,
    RunArtifacts,
    WorkflowDefinition,
    WorkflowError,
    load_workflow,
    new_run_id,
    run_workflow,
)

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.yaml"
SCRIPT_NAME = "script.ndjson"
SEARCH_LOG_NAME = "search_log.json"

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_LIMITS = 2
EXIT_BACKEND = 3
EXIT_CONFIG = 4


class SearchReplayError(SearchError):
    """A search failure reproduced from a run's search log."""


class RecordingSearch:
    """Pass-through search provider that logs every outcome by normalized query."""

    def __init__(self, inner: Any):
        self.inner = inner
        self.log: dict[str, Any] = {}

    def search(self, query: str, k: int) -> list[SearchResult]:
        key = normalize_query(query)
        try:
            results = self.inner.search(query, k)
        except Exception as exc:
            self.log[key] = {"error": str(exc) or type(exc).__name__}
            raise
        self.log[key] = {"results": [r.to_dict() for r in results]}
        return results

    def dumps(self) -> str:
        return json.dumps(self.log, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


class LoggedSearch:
    """Serves the outcomes recorded by :class:`RecordingSearch`."""

    def __init__(self, log: dict[str, Any]):
        self.log = log

    @classmethod
    def from_file(cls, path: Path | str) -> LoggedSearch:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def search(self, query: str, k: int) -> list[SearchResult]:
        entry = self.log.get(normalize_query(query))
        if entry is None:
            raise MissFixture(query)
        if "error" in entry:
            raise SearchReplayError(entry["error"])
        return [SearchResult(r["url"], r["content"]) for r in entry["results"]][:k]


@dataclass
class RunComponents:
    backend: RecordingBackend
    search: RecordingSearch
    team: Team
    workflow: WorkflowDefinition
    limits: Limits
    settings: ModelSettings
    kb: KnowledgeBase
    store: RagStore


def backend_config(cfg: RunConfig) -> BackendConfig:
    return BackendConfig(
        kind=cfg.backend,
        base_url=cfg.base_url,
        api_key_env=cfg.api_key_env,
        model=cfg.model,
        temperature=cfg.temperature,
        timeout=cfg.timeout,
        max_retries=cfg.max_retries,
        script=Path(cfg.script) if cfg.script else None,
    )


def make_search(cfg: RunConfig) -> Any:
    if cfg.search_mode == "live":
        return TavilySearch(api_key_env=cfg.search_api_key_env)
    if cfg.search_fixtures is None:
        return FixtureSearch({})
    data = json.loads(Path(cfg.search_fixtures).read_text(encoding="utf-8"))
    # a run's search log maps queries to {"results": ...} or {"error": ...}
    if data and all(isinstance(v, dict) for v in data.values()):
        return LoggedSearch(data)
    return FixtureSearch(data)


def build_components(cfg: RunConfig, inner_backend: ChatBackend | None = None) -> RunComponents:
    """Everything a run needs. Setup problems surface as :class:`ConfigError`."""
    try:
        kb = load_knowledge_base()
        store = load_corpus(cfg.rag_corpus)
        search = RecordingSearch(make_search(cfg))
        registry: ToolRegistry = build_registry(
            kb, search, store, search_k=cfg.search_results, rag_k=cfg.rag_top_k
        )
        team = load_team(registry, cfg.team_file, cfg.prompts_dir)
        workflow = load_workflow(cfg.workflow_file)
        limits = Limits(
            cfg.max_node_calls_per_step, cfg.max_tool_rounds_per_turn, cfg.max_router_retries, cfg.max_total_tokens
        )
        inner = inner_backend if inner_backend is not None else make_backend(backend_config(cfg))
    except (
        KnowledgeError,
        TeamConfigError,
        WorkflowError,
        RagError,
        SearchError,
        ScriptError,
        AuthMissing,
        FileNotFoundError,
        json.JSONDecodeError,
        ValueError,
    ) as exc:
        raise ConfigError(str(exc)) from exc
    settings = ModelSettings(model=cfg.model, temperature=cfg.temperature)
    return RunComponents(RecordingBackend(inner), search, team, workflow, limits, settings, kb, store)


@dataclass
class RunOutcome:
    run_dir: Path
    report: RunReport
    final: FinalReport | None
    exit_code: int
    error: str | None = None


def _effective_config(cfg: RunConfig, run_id: str) -> RunConfig:
    """Config as stored next to the artifacts, with absolute paths."""
    paths = {}
    for key in ("script", "search_fixtures", "rag_corpus", "team_file", "prompts_dir", "workflow_file", "output_dir"):
        value = getattr(cfg, key)
        if value is not None:
            paths[key] = str(Path(value).resolve())
    return cfg.replace(run_id=run_id, **paths)


def execute_run(
    cfg: RunConfig,
    problem: str,
    *,
    clock: Clock = utc_now,
    inner_backend: ChatBackend | None = None,
) -> RunOutcome:
    """Run the workflow and persist artifacts, the recorded script and search log.

    Raises :class:`ConfigError` for setup problems (nothing is persisted) and
    ``ValueError`` for an empty problem statement.
    """
    if not problem.strip():
        raise ValueError("problem statement is empty")
    parts = build_components(cfg, inner_backend)
    run_id = cfg.run_id or new_run_id(clock)
    sink = RunArtifacts(cfg.output_dir, run_id)
    if sink.dir.exists():
        raise ConfigError(f"run directory already exists: {sink.dir}")
    final: FinalReport | None = None
    code, error = EXIT_OK, None
    try:
        final, report = run_workflow(
            parts.backend, parts.team, parts.workflow, problem, parts.limits, sink, settings=parts.settings, clock=clock
        )
    except RunAborted as exc:
        report, code, error = exc.report, exc.exit_code, str(exc)
    finally:
        if sink.dir.exists():
            sink.write_text(CONFIG_NAME, _effective_config(cfg, run_id).to_yaml())
            sink.write_text(SCRIPT_NAME, parts.backend.script.dumps())
            sink.write_text(SEARCH_LOG_NAME, parts.search.dumps())
    return RunOutcome(sink.dir, report, final, code, error)


# -- replay -------------------------------------------------------------------------


@dataclass
class ReplayResult:
    ok: bool
    divergence: str | None
    replay_dir: Path
    exit_code: int


def _first_divergence(name: str, expected: str, got: str) -> str | None:
    if expected == got:
        return None
    a, b = expected.splitlines(), got.splitlines()
    for i, (x, y) in enumerate(zip(a, b), start=1):
        if x != y:
            return f"{name}: line {i} differs\n  recorded: {x[:160]}\n  replayed: {y[:160]}"
    return f"{name}: length differs ({len(a)} recorded lines, {len(b)} replayed)"


def compared_files(run_dir: Path) -> list[str]:
    names = sorted(p.name for p in run_dir.glob("step_*.md"))
    if (run_dir / FINAL_REPORT_NAME).exists():
        names.append(FINAL_REPORT_NAME)
    return [TRANSCRIPT_NAME, *names]


def compare_runs(recorded: Path, replayed: Path) -> str | None:
    """First difference between two run directories, timestamps excluded."""
    names = compared_files(recorded)
    extra = sorted(set(compared_files(replayed)) - set(names))
    if extra:
        return f"replay produced unexpected files: {', '.join(extra)}"
    for name in names:
        a, b = recorded / name, replayed / name
        if not b.exists():
            return f"{name}: missing from replay"
        diff = _first_divergence(
            name, mask_timestamps(a.read_text(encoding="utf-8")), mask_timestamps(b.read_text(encoding="utf-8"))
        )
        if diff:
            return diff
    ra = RunReport.from_dict(json.loads((recorded / REPORT_NAME).read_text(encoding="utf-8")))
    rb = RunReport.from_dict(json.loads((replayed / REPORT_NAME).read_text(encoding="utf-8")))
    da, db = ra.to_dict(deterministic_only=True), rb.to_dict(deterministic_only=True)
    for key in da:
        if da[key] != db.get(key):
            return f"{REPORT_NAME}: field {key!r} differs (recorded {da[key]!r}, replayed {db.get(key)!r})"
    return None


def replay_run(run_dir: Path | str, work_dir: Path | str | None = None) -> ReplayResult:
    """Re-run a finished run from its recorded script and compare the artifacts."""
    run_dir = Path(run_dir)
    for name in (TRANSCRIPT_NAME, SCRIPT_NAME, CONFIG_NAME, "problem.txt", REPORT_NAME):
        if not (run_dir / name).is_file():
            raise ConfigError(f"{run_dir} is not a complete run directory: {name} is missing")
    values = read_config_file(run_dir / CONFIG_NAME)
    root = Path(work_dir) if work_dir is not None else Path(tempfile.mkdtemp(prefix="triz-replay-"))
    cfg = build_config(
        {
            **values,
            "backend": "scripted",
            "script": str(run_dir / SCRIPT_NAME),
            "search": "fixture",
            "search_fixtures": str(run_dir / SEARCH_LOG_NAME),
            "output_dir": str(root),
        }
    )
    problem = (run_dir / "problem.txt").read_text(encoding="utf-8")
    outcome = execute_run(cfg, problem)
    divergence = compare_runs(run_dir, outcome.run_dir)
    ok = divergence is None
    return ReplayResult(ok, divergence, outcome.run_dir, EXIT_OK if ok else EXIT_MISMATCH)
