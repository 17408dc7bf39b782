"""The workflow engine.

Each workflow step is run as a supervised meeting: the supervisor picks a
member, the member answers (possibly after tool calls), control returns to the
supervisor, and so on until the step is documented and closed. After the last
step the documentation agent compiles the final report.

Node calls are counted as model calls (routing, agent, documentation,
compile) plus tool dispatches. One call of every step's budget is held back so
the step can always be documented.
"""

from __future__ import annotations

import logging
import time
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Sequence

import yaml

from .agents import (
    ModelSettings,
    StepInfo,
    Team,
    ToolRoundCapExceeded,
    assemble_context,
    call_model,
    invoke_agent,
    render_profile,
    route_next,
)
from .conversation import (
    FinalReport,
    Message,
    Role,
    StepDocument,
    StepId,
    TokenUsage,
    Transcript,
    human,
    message_record,
    render_documents,
    render_messages,
    system,
    transcript_header,
    utc_now,
)
from .llm import BackendError, ChatBackend
from .report import RunReport, accumulate_usage

logger = logging.getLogger(__name__)

FINAL_STEP = "final"
EMPTY_STEP_NOTE = "The step was closed before anyone contributed."
NO_DOC_TEXT = "(the documentation agent returned no text)"

Clock = Callable[[], datetime]


class WorkflowError(Exception):
    pass


class MissingStepDocument(WorkflowError):
    def __init__(self, step: StepId):
        super().__init__(f"no document for step {step}")
        self.step = step


class LimitExceeded(WorkflowError):
    """A run-wide limit was crossed; the run is aborted."""


class StepCapReached(WorkflowError):
    """The step used up its node-call budget; the step ends truncated."""


class RunAborted(Exception):
    def __init__(self, kind: str, reason: str, report: RunReport):
        super().__init__(f"run aborted ({kind}): {reason}")
        self.kind = kind
        self.reason = reason
        self.report = report

    @property
    def exit_code(self) -> int:
        return 2 if self.kind == "limits" else 3


@dataclass(frozen=True)
class Limits:
    max_node_calls_per_step: int = 25
    max_tool_rounds_per_turn: int = 4
    max_router_retries: int = 2
    max_total_tokens: int | None = None

    def __post_init__(self) -> None:
        # two calls is the least that can route once and still document
        if self.max_node_calls_per_step < 2:
            raise ValueError("max_node_calls_per_step must be at least 2")
        if self.max_tool_rounds_per_turn < 1:
            raise ValueError("max_tool_rounds_per_turn must be positive")
        if self.max_router_retries < 1:
            raise ValueError("max_router_retries must be positive")
        if self.max_total_tokens is not None and self.max_total_tokens < 1:
            raise ValueError("max_total_tokens must be positive")


@dataclass(frozen=True)
class WorkflowStep:
    id: int
    title: str
    instructions: str

    def info(self) -> StepInfo:
        return StepInfo(self.id, self.title, self.instructions.strip())


@dataclass(frozen=True)
class WorkflowDefinition:
    steps: tuple[WorkflowStep, ...]
    name: str = "triz"

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise WorkflowError("workflow has no steps")
        ids = [s.id for s in self.steps]
        if ids != list(range(1, len(ids) + 1)):
            raise WorkflowError(f"step ids must be 1..{len(ids)} in order, got {ids}")
        for s in self.steps:
            if not s.title.strip():
                raise WorkflowError(f"step {s.id} has no title")

    @property
    def titles(self) -> list[str]:
        return [s.title for s in self.steps]


def default_workflow_file() -> Path:
    return Path(str(resources.files("triz_agents") / "data" / "workflow.yaml"))


def load_workflow(path: Path | str | None = None) -> WorkflowDefinition:
    path = Path(path) if path is not None else default_workflow_file()
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise WorkflowError(f"workflow file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise WorkflowError(f"{path}: {exc}") from None
    try:
        steps = tuple(
            WorkflowStep(int(s["id"]), str(s["title"]).strip(), str(s.get("instructions") or "")) for s in data["steps"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise WorkflowError(f"{path}: malformed step list ({exc!r})") from None
    return WorkflowDefinition(steps, name=str(data.get("name", "triz")))


# -- metering --------------------------------------------------------------------


class Meter:
    """Counts node calls and tokens into a RunReport and enforces limits."""

    def __init__(self, report: RunReport, limits: Limits):
        self.report = report
        self.limits = limits
        self.step: StepId = 0
        self._use_reserve = False

    def begin_step(self, step: StepId) -> None:
        self.step = step

    @contextmanager
    def reserve(self) -> Iterator[None]:
        self._use_reserve = True
        try:
            yield
        finally:
            self._use_reserve = False

    def before(self, kind: str, agent: str) -> None:
        if self.step != FINAL_STEP and not self._use_reserve:
            budget = self.limits.max_node_calls_per_step - 1
            if self.report.step_node_calls(self.step) >= budget:
                raise StepCapReached(f"step {self.step} reached {budget} node calls")
        self.report.record_node(self.step, kind)

    def after_model(self, agent: str, usage: TokenUsage) -> None:
        accumulate_usage(self.report, usage, agent=agent, step=self.step)
        cap = self.limits.max_total_tokens
        if cap is not None and self.report.usage.total_tokens > cap:
            raise LimitExceeded(f"token total {self.report.usage.total_tokens} exceeds {cap}")


# -- artifacts ------------------------------------------------------------------


STEP_DOC_NAME = "step_{step}.md"
FINAL_REPORT_NAME = "final_report.md"
TRANSCRIPT_NAME = "transcript.ndjson"
REPORT_NAME = "report.json"
PROBLEM_NAME = "problem.txt"


class RunArtifacts:
    """Files of one run under ``root/run_id``. The transcript is append-only."""

    def __init__(self, root: Path | str, run_id: str):
        self.run_id = run_id
        self.dir = Path(root) / run_id
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def _write(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        if p not in self.written:
            self.written.append(p)
        return p

    def start(self, problem: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=False)
        self._write(PROBLEM_NAME, problem)
        self._write(TRANSCRIPT_NAME, transcript_header() + "\n")

    def append_message(self, step: StepId, m: Message) -> None:
        with self.path(TRANSCRIPT_NAME).open("a", encoding="utf-8") as fh:
            fh.write(message_record(step, m) + "\n")

    def write_step_doc(self, doc: StepDocument) -> Path:
        return self._write(STEP_DOC_NAME.format(step=doc.step), doc.to_markdown())

    def write_final(self, report: FinalReport) -> Path:
        return self._write(FINAL_REPORT_NAME, report.to_markdown())

    def write_text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def write_report(self, report: RunReport) -> Path:
        report.artifacts = [p.name for p in self.written if p.name != REPORT_NAME] + [REPORT_NAME]
        return self._write(REPORT_NAME, report.to_json())


@dataclass
class RunState:
    run_id: str
    step: StepId = 0
    transcripts: list[Transcript] = field(default_factory=list)
    docs: list[StepDocument] = field(default_factory=list)
    report: RunReport = field(default_factory=RunReport)

    @property
    def status(self) -> str:
        return self.report.status

    @property
    def node_calls(self) -> int:
        return self.report.node_calls

    @property
    def usage(self) -> TokenUsage:
        return self.report.usage

    def add_doc(self, doc: StepDocument) -> None:
        expected = len(self.docs) + 1
        if doc.step != expected:
            raise WorkflowError(f"document for step {doc.step} arrived while step {expected} was due")
        self.docs.append(doc)


# -- steps -------------------------------------------------------------------------


def document_step(
    backend: ChatBackend,
    team: Team,
    step: StepInfo,
    transcript: Transcript,
    *,
    settings: ModelSettings | None = None,
    hook: Meter | None = None,
    clock: Clock = utc_now,
    truncated: bool = False,
) -> StepDocument:
    """Have the documentation agent write up one step from its full transcript."""
    if not transcript.messages:
        raise ValueError(f"step {step.id} transcript is empty; nothing to document")
    settings = settings or ModelSettings()
    profile = team.documenter
    prompt = team.prompts.document_step.render(
        {
            "step_title": step.title,
            "step_instructions": step.instructions,
            "transcript": render_messages(transcript.messages, tool_result_limit=None),
        }
    )
    context = [system(render_profile(team, profile, f"Current step: {step.title}")), human(prompt)]
    req = settings.request(profile.name, step.id, context)
    resp = call_model(backend, req, "documentation", hook) if hook else backend.complete(req)
    body = (resp.content or "").strip() or NO_DOC_TEXT
    transcript.append(Message(Role.AI, profile.name, body, usage=resp.usage))
    return StepDocument(step.id, step.title, body, profile.name, created_at=clock(), truncated=truncated)


def compile_final_report(
    backend: ChatBackend,
    team: Team,
    docs: Sequence[StepDocument],
    *,
    problem: str = "",
    expected_steps: Sequence[StepId] = (1, 2, 3, 4, 5, 6),
    settings: ModelSettings | None = None,
    hook: Meter | None = None,
    clock: Clock = utc_now,
) -> FinalReport:
    by_step = {d.step: d for d in docs}
    for s in expected_steps:
        if s not in by_step:
            raise MissingStepDocument(s)
    ordered = [by_step[s] for s in expected_steps]
    settings = settings or ModelSettings()
    profile = team.documenter
    prompt = team.prompts.final_report.render(
        {"problem": problem.strip() or "(see the step documentation)", "steps_documentation": render_documents(ordered)}
    )
    context = [system(render_profile(team, profile, "All workflow steps are finished.")), human(prompt)]
    req = settings.request(profile.name, FINAL_STEP, context)
    resp = call_model(backend, req, "compile", hook) if hook else backend.complete(req)
    body = (resp.content or "").strip() or NO_DOC_TEXT
    return FinalReport(body, tuple(expected_steps), profile.name, created_at=clock())


def run_step(
    backend: ChatBackend,
    team: Team,
    step: StepInfo,
    prior_docs: Sequence[StepDocument],
    problem: str | None,
    limits: Limits,
    *,
    meter: Meter,
    settings: ModelSettings | None = None,
    emit: Callable[[StepId, Message], None] | None = None,
    clock: Clock = utc_now,
) -> tuple[StepDocument, Transcript]:
    """Run one meeting. ``problem`` is given only for the step that opens the run."""
    settings = settings or ModelSettings()
    emit = emit or (lambda s, m: None)
    transcript = Transcript(step.id, roster=team.roster)
    report = meter.report

    def add(m: Message) -> None:
        transcript.append(m)
        emit(step.id, m)

    def documented(truncated: bool) -> StepDocument:
        before = len(transcript)
        doc = document_step(backend, team, step, transcript, settings=settings, hook=meter, clock=clock, truncated=truncated)
        emit(step.id, transcript.messages[before])
        return doc

    if problem is not None:
        add(human(problem))
    meter.begin_step(step.id)
    doc: StepDocument | None = None
    truncated = False
    try:
        while True:
            decision = route_next(
                backend,
                team,
                step,
                transcript.messages,
                prior_docs,
                settings=settings,
                max_retries=limits.max_router_retries,
                hook=meter,
            )
            if decision.fallback:
                report.limit_hits.append(f"step {step.id}: router fell back to FINISH")
            if decision.is_finish:
                break
            add(Message(Role.AI, team.supervisor.name, decision.raw.strip(), usage=decision.usage))
            if decision.next == team.documentation_agent:
                doc = documented(False)
                continue
            profile = team.member(decision.next)
            context = assemble_context(team, profile, step, prior_docs, transcript.messages)
            try:
                invoke_agent(
                    backend,
                    profile,
                    context,
                    registry=team.registry,
                    step=step.id,
                    settings=settings,
                    max_tool_rounds=limits.max_tool_rounds_per_turn,
                    hook=meter,
                    emit=add,
                )
            except ToolRoundCapExceeded as exc:
                logger.warning("%s", exc)
                report.limit_hits.append(f"step {step.id}: {exc}")
    except StepCapReached as exc:
        logger.warning("%s; documenting what the team has so far", exc)
        report.limit_hits.append(f"step {step.id}: node-call cap {limits.max_node_calls_per_step}")
        truncated = True
    if doc is None or truncated:
        if not transcript.messages:
            add(human(EMPTY_STEP_NOTE, sender="orchestrator"))
        with meter.reserve():
            doc = documented(truncated)
    return doc, transcript


def new_run_id(clock: Clock = utc_now) -> str:
    return f"{clock().strftime('%Y%m%dT%H%M%SZ')}-{uuid.uuid4().hex[:6]}"


def run_workflow(
    backend: ChatBackend,
    team: Team,
    workflow: WorkflowDefinition,
    problem: str,
    limits: Limits,
    sink: RunArtifacts,
    *,
    settings: ModelSettings | None = None,
    clock: Clock = utc_now,
) -> tuple[FinalReport, RunReport]:
    """Run every workflow step, then compile the final report.

    On a backend failure or a run-wide limit the partial artifacts and the run
    report are persisted and :class:`RunAborted` is raised.
    """
    if not problem or not problem.strip():
        raise ValueError("problem statement is empty")
    settings = settings or ModelSettings()
    report = RunReport(run_id=sink.run_id, started_at=clock().isoformat())
    state = RunState(sink.run_id, report=report)
    meter = Meter(report, limits)
    started = time.monotonic()
    sink.start(problem)
    try:
        for wstep in workflow.steps:
            state.step = wstep.id
            doc, transcript = run_step(
                backend,
                team,
                wstep.info(),
                list(state.docs),
                problem if wstep.id == workflow.steps[0].id else None,
                limits,
                meter=meter,
                settings=settings,
                emit=sink.append_message,
                clock=clock,
            )
            state.transcripts.append(transcript)
            state.add_doc(doc)
            sink.write_step_doc(doc)
        state.step = FINAL_STEP
        meter.begin_step(FINAL_STEP)
        final = compile_final_report(
            backend,
            team,
            state.docs,
            problem=problem,
            expected_steps=[s.id for s in workflow.steps],
            settings=settings,
            hook=meter,
            clock=clock,
        )
        sink.write_final(final)
        report.status = "completed"
        return final, report
    except BackendError as exc:
        report.status = "aborted"
        report.abort_reason = f"backend: {exc}"
        raise RunAborted("backend", str(exc), report) from exc
    except LimitExceeded as exc:
        report.status = "aborted"
        report.abort_reason = f"limits: {exc}"
        report.limit_hits.append(str(exc))
        raise RunAborted("limits", str(exc), report) from exc
    finally:
        report.wall_time_s = time.monotonic() - started
        sink.write_report(report)
