"""Acceptance suite. Each test carries a ``criterion`` marker and the terminal
summary prints one PASS/FAIL line per criterion."""

from __future__ import annotations

import json
import math
import random
import string
import time

import httpx
import pytest
from hypothesis import HealthCheck, given, settings

from triz_agents.agents import FINISH, StepInfo, assemble_context, build_default_team, route_next
from triz_agents.config import RunConfig
from triz_agents.conversation import (
    Role,
    StepDocument,
    TokenUsage,
    mask_timestamps,
    parse_transcript,
    parse_transcripts,
    serialize_transcript,
)
from triz_agents.knowledge import list_parameters, load_knowledge_base, lookup_matrix
from triz_agents.llm import ChatResponse, OpenAIChatBackend, Script, parse_wire_response
from triz_agents.report import RunReport, accumulate_usage
from triz_agents.runner import EXIT_BACKEND, EXIT_OK, backend_config, execute_run, replay_run
from triz_agents.tools import FixtureSearch, build_registry
from triz_agents.tools.rag import RagStore, chunk_starts, split_chunks
from triz_agents.workflow import Limits, RunState, WorkflowError

from conftest import (
    FULL_SCRIPT,
    GANTRY_PROBLEM,
    SEARCH_FIXTURES,
    TEST_FIXTURES,
    TRIZ_CORPUS,
    ScriptBuilder,
    fixed_clock,
    read_oracle_grid,
    scripted_config,
)
from strategies import step_messages, transcripts

C1 = pytest.mark.criterion(1, "knowledge fidelity")
C2 = pytest.mark.criterion(2, "artifact count")
C3 = pytest.mark.criterion(3, "trace-shape reproduction")
C4 = pytest.mark.criterion(4, "run metrics")
C5 = pytest.mark.criterion(5, "substituted property suites")
C6 = pytest.mark.criterion(6, "live-mode smoke contract")

WORKERS_EXCEPT_DOC = {
    "MechanicalEngineer",
    "ElectricalEngineer",
    "ControlSystemsEngineer",
    "SafetyEngineer",
    "TRIZSpecialist",
    "OperationsSpecialist",
}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("acceptance")
    started = time.perf_counter()
    out = execute_run(scripted_config(tmp, FULL_SCRIPT), GANTRY_PROBLEM.read_text(encoding="utf-8"), clock=fixed_clock)
    out.elapsed = time.perf_counter() - started
    return out


@pytest.fixture(scope="module")
def run_transcripts(full_run):
    return parse_transcripts((full_run.run_dir / "transcript.ndjson").read_text(encoding="utf-8"))


def _speakers(t):
    return {m.sender for m in t.messages if m.role is Role.AI and m.sender in WORKERS_EXCEPT_DOC}


def _tool_sequence(t):
    seq = []
    for m in t.messages:
        if m.role is Role.TOOL and (not seq or seq[-1] != m.sender):
            seq.append(m.sender)
    return seq


# -- 1 -------------------------------------------------------------------------------------


@C1
def test_c1_knowledge_fidelity():
    started = time.perf_counter()
    kb = load_knowledge_base()
    oracle = read_oracle_grid()
    mismatches = []
    for i in range(1, 40):
        for j in range(1, 40):
            if i == j:
                assert oracle[(i, j)] == []
                continue
            if lookup_matrix(kb, i, j) != oracle[(i, j)]:
                mismatches.append((i, j))
    elapsed = time.perf_counter() - started
    assert len(list_parameters(kb)) == 39
    assert [p.id for p in kb.principles] == list(range(1, 41))
    assert len(oracle) == 39 * 39
    assert mismatches == []
    assert elapsed < 1.0, f"{elapsed:.3f}s"


# -- 2 -------------------------------------------------------------------------------------


@C2
def test_c2_six_documents_and_one_final_report(full_run):
    assert full_run.exit_code == EXIT_OK
    docs = sorted(p.name for p in full_run.run_dir.glob("step_*.md"))
    assert docs == [f"step_{n}.md" for n in range(1, 7)]
    assert len(list(full_run.run_dir.glob("final_report.md"))) == 1
    assert (full_run.run_dir / "problem.txt").read_text(encoding="utf-8") == GANTRY_PROBLEM.read_text(encoding="utf-8")
    assert full_run.elapsed < 5.0, f"{full_run.elapsed:.2f}s"


# -- 3 -------------------------------------------------------------------------------------


@C3
def test_c3_step1_mechanical_engineer_searches(run_transcripts):
    t = run_transcripts[0]
    assert "MechanicalEngineer" in _speakers(t)
    calls = [c for m in t.messages if m.sender == "MechanicalEngineer" for c in m.tool_calls]
    assert any(c.name == "web_search" for c in calls)
    assert any(m.role is Role.TOOL and m.sender == "web_search" for m in t.messages)


@C3
def test_c3_step4_triz_specialist_only(run_transcripts):
    t = run_transcripts[3]
    assert _speakers(t) == {"TRIZSpecialist"}
    assert _tool_sequence(t) == ["triz_features", "contradiction_matrix", "inventive_principles"]


@C3
def test_c3_step5_single_answer_without_tools(run_transcripts):
    t = run_transcripts[4]
    answers = [m for m in t.messages if m.role is Role.AI and m.sender in WORKERS_EXCEPT_DOC]
    assert len(answers) == 1 and not answers[0].tool_calls
    assert not any(m.role is Role.TOOL for m in t.messages)


@C3
def test_c3_step6_team(run_transcripts):
    assert {"ControlSystemsEngineer", "SafetyEngineer", "OperationsSpecialist"} <= _speakers(run_transcripts[5])


# -- 4 -------------------------------------------------------------------------------------


@C4
def test_c4_node_calls_and_tokens_match_script(full_run, run_transcripts):
    script = Script.load(FULL_SCRIPT)
    dispatches = sum(1 for t in run_transcripts for m in t.messages if m.role is Role.TOOL)
    report = full_run.report
    assert report.node_calls == len(script) + dispatches
    assert report.usage == script.total_usage()
    assert 60 <= report.node_calls <= 80
    assert 150_000 <= report.usage.total_tokens <= 250_000
    assert report.limit_hits == []


def _metered_script(total):
    """A six-step script with exactly ``total`` node calls and no tools.

    Each step costs 3 calls (hand-over, document, FINISH) plus 2 per worker
    turn; one unparseable routing answer and the compile add 1 each.
    """
    pairs = (total - 18 - 2) // 2
    assert 2 * pairs + 20 == total
    per_step = [pairs // 6 + (1 if s < pairs % 6 else 0) for s in range(6)]
    b = ScriptBuilder(usage=(2400, 300))
    b.say("ProjectManager", 1, "Let me think about who should start.")
    workers = sorted(WORKERS_EXCEPT_DOC)
    for step, n in enumerate(per_step, start=1):
        for k in range(n):
            w = workers[(step + k) % len(workers)]
            b.say("ProjectManager", step, w).say(w, step, f"{w} on step {step}, point {k}.")
        b.say("ProjectManager", step, "DocumentationSpecialist")
        b.say("DocumentationSpecialist", step, f"Step {step} summary.")
        b.say("ProjectManager", step, FINISH)
    return b.say("DocumentationSpecialist", "final", "# Final report").build()


@C4
@pytest.mark.parametrize("total", [60, 70, 80])
def test_c4_default_limits_admit_60_to_80_calls(tmp_path, total):
    script = _metered_script(total)
    path = tmp_path / "s.script"
    script.save(path)
    out = execute_run(scripted_config(tmp_path, path), "Crane problem.", clock=fixed_clock)
    assert out.exit_code == EXIT_OK
    assert out.report.node_calls == total == len(script)
    assert out.report.usage == script.total_usage()
    for n in range(1, 7):
        doc = StepDocument.from_markdown((out.run_dir / f"step_{n}.md").read_text(encoding="utf-8"))
        assert not doc.truncated
    assert not [h for h in out.report.limit_hits if "cap" in h]
    assert RunConfig().max_node_calls_per_step == Limits().max_node_calls_per_step == 25


@C4
def test_c4_accounting_range_without_overflow():
    report = RunReport()
    for i in range(80):
        accumulate_usage(report, TokenUsage(2800, 325), agent=f"agent{i % 8}", step=1 + i % 6)
    assert report.usage.total_tokens == 80 * 3125 == 250_000
    back = RunReport.from_dict(json.loads(report.to_json()))
    assert back.usage == report.usage
    assert sum(u.total_tokens for u in back.usage_by_agent.values()) == 250_000
    big = accumulate_usage(RunReport(), TokenUsage(10**15, 10**15))
    assert RunReport.from_dict(json.loads(big.to_json())).usage.total_tokens == 2 * 10**15


# -- 5 -------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def team():
    kb = load_knowledge_base()
    return build_default_team(kb, build_registry(kb, FixtureSearch({})))


class _Canned:
    def __init__(self, outputs):
        self.outputs = list(outputs)

    def complete(self, req):
        return ChatResponse(content=self.outputs.pop(0), usage=TokenUsage(1, 1))


@C5
def test_c5_router_roster_closure(team):
    rng = random.Random(7)
    alphabet = string.ascii_letters + string.punctuation + " \n\t"
    pool = [*team.member_names, FINISH, "finish", "ProjectManager", "Engineer", ""]
    allowed = set(team.member_names) | {None}
    step = StepInfo(1, "Defining Engineering System")
    for _ in range(10_000):
        outputs = []
        for _ in range(3):
            if rng.random() < 0.3:
                word = rng.choice(pool)
                noise = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 4)))
                outputs.append(rng.choice([word, noise + "\n" + word, word + noise]))
            else:
                outputs.append("".join(rng.choice(alphabet) for _ in range(rng.randint(0, 30))))
        decision = route_next(_Canned(outputs), team, step, [], [])
        assert decision.next in allowed


@C5
@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(transcripts())
def test_c5_transcript_round_trip(t):
    assert parse_transcript(serialize_transcript(t)) == t


@C5
@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
@given(step_messages(senders=("MechanicalEngineer", "SafetyEngineer", "TRIZSpecialist", "ProjectManager")))
def test_c5_demotion_invariant(team, messages):
    step = StepInfo(2, "Function Analysis")
    for profile in team.members:
        ctx = assemble_context(team, profile, step, [], messages)
        assert not any(m.role is Role.AI and m.sender != profile.name for m in ctx)


@C5
def test_c5_bm25_against_hand_oracle():
    store = RagStore()
    store.ingest("d1", "contradiction matrix contradiction")
    store.ingest("d2", "physical contradiction")
    store.ingest("d3", "gantry crane")
    idf = math.log(1.6)
    expected = [idf * 14 / 11, idf * 154 / 145, 0.0]
    assert store.scores("contradiction") == pytest.approx(expected, rel=1e-12)
    _, top = store.query("contradiction", 3)
    assert [c.doc_id for c in top] == ["d1", "d2", "d3"]


@C5
def test_c5_chunk_stride_oracle():
    assert chunk_starts(2000) == [0, 600, 1200, 1800]
    assert [s for s, _ in split_chunks("a" * 2000)] == [0, 600, 1200, 1800]


@C5
def test_c5_step_monotonicity_and_one_doc_per_step(full_run, run_transcripts):
    lines = (full_run.run_dir / "transcript.ndjson").read_text(encoding="utf-8").splitlines()[1:]
    steps = [json.loads(ln)["step"] for ln in lines]
    assert steps == sorted(steps)
    assert [t.step for t in run_transcripts] == [1, 2, 3, 4, 5, 6]
    for t in run_transcripts:
        docs = [m for m in t.messages if m.role is Role.AI and m.sender == "DocumentationSpecialist"]
        assert len(docs) == 1
    state = RunState("x")
    state.add_doc(StepDocument(1, "a", "b", "DocumentationSpecialist"))
    with pytest.raises(WorkflowError):
        state.add_doc(StepDocument(3, "a", "b", "DocumentationSpecialist"))


@C5
def test_c5_replay_byte_equality(full_run, tmp_path):
    result = replay_run(full_run.run_dir, tmp_path)
    assert result.ok, result.divergence
    for name in ["transcript.ndjson", "final_report.md", *(f"step_{n}.md" for n in range(1, 7))]:
        a = mask_timestamps((full_run.run_dir / name).read_text(encoding="utf-8"))
        b = mask_timestamps((result.replay_dir / name).read_text(encoding="utf-8"))
        assert a == b, name


# -- 6 -------------------------------------------------------------------------------------


@C6
@pytest.mark.parametrize("name", ["text_answer.json", "tool_calls.json", "length_cut.json"])
def test_c6_wire_fixtures_parse(name):
    body = json.loads((TEST_FIXTURES / "wire" / name).read_text(encoding="utf-8"))
    parsed = parse_wire_response(body)
    assert parsed.usage.total_tokens == body["usage"]["total_tokens"]
    assert parse_wire_response(parsed.to_wire()) == parsed


def _live_config(tmp_path):
    return RunConfig(
        backend="live",
        search="fixture",
        search_fixtures=str(SEARCH_FIXTURES),
        rag_corpus=str(TRIZ_CORPUS),
        output_dir=str(tmp_path / "runs"),
        run_id="live",
        max_retries=1,
    )


def _http_backend(cfg, handler):
    return OpenAIChatBackend(
        backend_config(cfg), transport=httpx.MockTransport(handler), sleep=lambda s: None, environ={"OPENAI_API_KEY": "k"}
    )


@C6
def test_c6_live_client_completes_over_http(tmp_path):
    # an endpoint that answers with the scripted responses in call order
    queue = [e.response for e in Script.load(FULL_SCRIPT).entries]
    cfg = _live_config(tmp_path)
    backend = _http_backend(cfg, lambda request: httpx.Response(200, json=queue.pop(0).to_wire()))
    out = execute_run(cfg, GANTRY_PROBLEM.read_text(encoding="utf-8"), inner_backend=backend, clock=fixed_clock)
    assert out.exit_code == EXIT_OK
    assert queue == []
    assert len(list(out.run_dir.glob("step_*.md"))) == 6
    assert (out.run_dir / "final_report.md").exists()


@C6
def test_c6_live_failure_aborts_cleanly(tmp_path):
    queue = [e.response for e in Script.load(FULL_SCRIPT).entries[:12]]

    def handler(request):
        if queue:
            return httpx.Response(200, json=queue.pop(0).to_wire())
        return httpx.Response(503, text="overloaded")

    cfg = _live_config(tmp_path)
    out = execute_run(cfg, GANTRY_PROBLEM.read_text(encoding="utf-8"), inner_backend=_http_backend(cfg, handler))
    assert out.exit_code == EXIT_BACKEND
    data = json.loads((out.run_dir / "report.json").read_text(encoding="utf-8"))
    assert data["status"] == "aborted"
    assert (out.run_dir / "step_1.md").exists()
    assert not (out.run_dir / "final_report.md").exists()
    recorded = Script.load(out.run_dir / "script.ndjson")
    assert len(recorded) == 12
    parse_transcripts((out.run_dir / "transcript.ndjson").read_text(encoding="utf-8"))
