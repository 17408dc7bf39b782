"""Smoke run against a real OpenAI-compatible endpoint.

Opt in with ``TRIZ_AGENTS_LIVE=1``; the endpoint key must be in
``OPENAI_API_KEY`` (or the variable named by ``TRIZ_AGENTS_API_KEY_ENV``).
``TRIZ_AGENTS_BASE_URL`` and ``TRIZ_AGENTS_MODEL`` override the defaults.
Web search uses the bundled fixtures unless ``TAVILY_API_KEY`` is set.
"""

from __future__ import annotations

import json
import os

import pytest
from click.testing import CliRunner

from triz_agents.cli import cli
from triz_agents.conversation import parse_transcripts

from conftest import GANTRY_PROBLEM, SEARCH_FIXTURES, TRIZ_CORPUS

pytestmark = [
    pytest.mark.live,
    pytest.mark.criterion(6, "live-mode smoke contract"),
    pytest.mark.skipif(os.environ.get("TRIZ_AGENTS_LIVE") != "1", reason="set TRIZ_AGENTS_LIVE=1 to run"),
]


def test_live_run(tmp_path):
    key_env = os.environ.get("TRIZ_AGENTS_API_KEY_ENV", "OPENAI_API_KEY")
    if not os.environ.get(key_env):
        pytest.skip(f"{key_env} is not set")
    args = [
        "run", str(GANTRY_PROBLEM),
        "--backend", "live",
        "--api-key-env", key_env,
        "--rag-corpus", str(TRIZ_CORPUS),
        "--output-dir", str(tmp_path),
        "--run-id", "live",
        "--max-total-tokens", os.environ.get("TRIZ_AGENTS_MAX_TOKENS", "400000"),
    ]
    if os.environ.get("TRIZ_AGENTS_BASE_URL"):
        args += ["--base-url", os.environ["TRIZ_AGENTS_BASE_URL"]]
    if os.environ.get("TRIZ_AGENTS_MODEL"):
        args += ["--model", os.environ["TRIZ_AGENTS_MODEL"]]
    if os.environ.get("TAVILY_API_KEY"):
        args += ["--search", "live"]
    else:
        args += ["--search", "fixture", "--search-fixtures", str(SEARCH_FIXTURES)]

    result = CliRunner().invoke(cli, args)
    assert result.exit_code in (0, 2, 3), result.output
    run_dir = tmp_path / "live"
    report = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
    parse_transcripts((run_dir / "transcript.ndjson").read_text(encoding="utf-8"))
    assert (run_dir / "script.ndjson").exists()
    if result.exit_code == 0:
        assert report["status"] == "completed"
        assert len(list(run_dir.glob("step_*.md"))) == 6
        assert (run_dir / "final_report.md").exists()
    else:
        assert report["status"] == "aborted" and report["abort_reason"]
