from __future__ import annotations

import re
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

import pytest

from triz_agents.config import RunConfig
from triz_agents.conversation import TokenUsage, ToolCall
from triz_agents.knowledge import load_knowledge_base
from triz_agents.llm import ChatResponse, Script, ScriptEntry

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
TEST_FIXTURES = Path(__file__).resolve().parent / "fixtures"

GANTRY_PROBLEM = FIXTURES / "gantry_crane.txt"
FULL_SCRIPT = FIXTURES / "full_run.script"
SEARCH_FIXTURES = FIXTURES / "search_fixtures.json"
TRIZ_CORPUS = FIXTURES / "triz_corpus"
ORACLE_GRID = TEST_FIXTURES / "altshuller_matrix_grid.csv"


def read_oracle_grid(path: Path = ORACLE_GRID) -> dict[tuple[int, int], list[int]]:
    """Parse the semicolon grid (row = improving, column = worsening)."""
    cells = {}
    rows = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    for i, row in enumerate(rows, start=1):
        for j, cell in enumerate(row.split(";"), start=1):
            cells[(i, j)] = [int(x) for x in re.findall(r"\d+", cell)]
    return cells


class ScriptBuilder:
    """Builds a script in call order; turn numbers are counted per (agent, step)."""

    def __init__(self, usage: tuple[int, int] = (1000, 100)):
        self.usage = usage
        self.entries: list[ScriptEntry] = []
        self._turns: dict[tuple, int] = {}

    def _add(self, agent, step, response):
        turn = self._turns.get((agent, step), 0)
        self._turns[(agent, step)] = turn + 1
        self.entries.append(ScriptEntry(agent, step, turn, response))
        return self

    def say(self, agent, step, text):
        return self._add(agent, step, ChatResponse(content=text, usage=TokenUsage(*self.usage)))

    def call(self, agent, step, *calls):
        tc = [ToolCall(f"{agent}-{step}-{len(self.entries)}-{i}", name, args) for i, (name, args) in enumerate(calls)]
        return self._add(agent, step, ChatResponse(tool_calls=tc, usage=TokenUsage(*self.usage), finish_reason="tool_calls"))

    def simple_step(self, step, worker="MechanicalEngineer"):
        """Route to one worker, let it answer, then hand over to documentation and finish."""
        self.say("ProjectManager", step, worker).say(worker, step, f"{worker} input for step {step}.")
        self.say("ProjectManager", step, "DocumentationSpecialist")
        self.say("DocumentationSpecialist", step, f"Summary of step {step}.")
        return self.say("ProjectManager", step, "FINISH")

    def build(self) -> Script:
        return Script(list(self.entries))


def scripted_config(tmp_path, script_path, **overrides) -> RunConfig:
    values = {
        "backend": "scripted",
        "script": str(script_path),
        "search_fixtures": str(SEARCH_FIXTURES),
        "rag_corpus": str(TRIZ_CORPUS),
        "output_dir": str(tmp_path / "runs"),
        "run_id": "run",
    }
    values.update(overrides)
    return RunConfig(**values)


def fixed_clock():
    return datetime(2026, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def kb():
    return load_knowledge_base()


@pytest.fixture(scope="session")
def oracle():
    return read_oracle_grid()


# -- acceptance summary ---------------------------------------------------------

_criteria: dict[int, dict] = defaultdict(lambda: {"title": "", "passed": 0, "failed": 0, "skipped": 0})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion checked by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    rec = _criteria[n]
    rec["title"] = title
    if call.when == "setup" and call.excinfo is not None:
        rec["skipped" if call.excinfo.errisinstance(pytest.skip.Exception) else "failed"] += 1
    elif call.when == "call":
        if call.excinfo is None:
            rec["passed"] += 1
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            rec["skipped"] += 1
        else:
            rec["failed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        rec = _criteria[n]
        if rec["failed"]:
            status = "FAIL"
        elif rec["passed"]:
            status = "PASS"
        else:
            status = "SKIP"
        counts = f"{rec['passed']} passed, {rec['failed']} failed, {rec['skipped']} skipped"
        terminalreporter.write_line(f"criterion {n} [{status}] {rec['title']} ({counts})")
