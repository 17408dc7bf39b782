"""Agent profiles, the default team, supervisor routing and the agent turn loop."""

from __future__ import annotations

import logging
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Mapping, Protocol, Sequence

import yaml

from .conversation import (
    Message,
    PromptTemplate,
    Role,
    StepDocument,
    StepId,
    TokenUsage,
    demote_to_human,
    human,
    render_documents,
    render_messages,
    system,
)
from .knowledge import KnowledgeBase
from .llm import ChatBackend, ChatRequest, ChatResponse
from .tools import FixtureSearch, ToolCall, ToolDescriptor, ToolRegistry, ToolResult, build_registry

logger = logging.getLogger(__name__)

FINISH = "FINISH"
DEFAULT_MAX_TOOL_ROUNDS = 4
DEFAULT_MAX_ROUTER_RETRIES = 2

FORCE_ANSWER_TEXT = (
    "You have used all tool rounds available for this turn. "
    "Answer now in plain text with what you have found."
)
ROUTER_TRIGGER_TEXT = "Decide who acts next."
REQUIRED_TOOLS_TEXT = "Before you answer, use each of these tools at least once: {tools}."


class ContextMode(str, Enum):
    FULL_MESSAGES = "full_messages"
    DOCS_AND_MESSAGES = "docs_and_messages"


class AgentError(Exception):
    pass


class ToolRoundCapExceeded(AgentError):
    def __init__(self, agent: str, rounds: int):
        super().__init__(f"{agent} still requested tools after {rounds} rounds and a forced final call")
        self.agent = agent
        self.rounds = rounds


class TeamConfigError(AgentError):
    pass


@dataclass(frozen=True)
class AgentProfile:
    name: str
    role: str
    responsibilities: str
    context_mode: ContextMode = ContextMode.DOCS_AND_MESSAGES
    toolset: tuple[ToolDescriptor, ...] = ()
    extra_instructions: str = ""
    # tools the agent is asked to use in every turn; empty by default
    required_tools: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_mode", ContextMode(self.context_mode))
        object.__setattr__(self, "toolset", tuple(self.toolset))
        object.__setattr__(self, "required_tools", tuple(self.required_tools))
        if not self.name or any(c.isspace() for c in self.name):
            raise TeamConfigError(f"agent name {self.name!r} must be non-empty without whitespace")
        missing = [t for t in self.required_tools if t not in self.tool_names]
        if missing:
            raise TeamConfigError(f"agent {self.name} requires tools it does not have: {missing}")

    @property
    def tool_names(self) -> list[str]:
        return [t.name for t in self.toolset]


@dataclass(frozen=True)
class Prompts:
    """The prompt templates a team runs with."""

    worker_profile: PromptTemplate
    worker_context: PromptTemplate
    supervisor: PromptTemplate
    router_retry: PromptTemplate
    document_step: PromptTemplate
    final_report: PromptTemplate

    @classmethod
    def load(cls, prompts_dir: Path | str | None = None) -> Prompts:
        root = Path(prompts_dir) if prompts_dir is not None else default_prompts_dir()

        def read(name: str) -> PromptTemplate:
            path = root / f"{name}.md"
            if not path.is_file():
                raise TeamConfigError(f"prompt template not found: {path}")
            return PromptTemplate.parse(path.read_text(encoding="utf-8").rstrip("\n"))

        return cls(*(read(n) for n in cls.__dataclass_fields__))


@dataclass(frozen=True)
class Team:
    members: tuple[AgentProfile, ...]
    supervisor: AgentProfile
    documentation_agent: str
    prompts: Prompts
    registry: ToolRegistry = field(compare=False, repr=False, default_factory=ToolRegistry)

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        names = [m.name for m in self.members]
        if len(set(names)) != len(names):
            raise TeamConfigError("member names must be unique")
        if self.supervisor.name in names:
            raise TeamConfigError("the supervisor cannot also be a member")
        if self.supervisor.toolset:
            raise TeamConfigError("the supervisor must not have tools")
        if self.documentation_agent not in names:
            raise TeamConfigError(f"documentation agent {self.documentation_agent!r} is not a member")

    @property
    def member_names(self) -> list[str]:
        return [m.name for m in self.members]

    @property
    def roster(self) -> frozenset[str]:
        """Everyone allowed to author ai messages."""
        return frozenset([*self.member_names, self.supervisor.name])

    def member(self, name: str) -> AgentProfile:
        for m in self.members:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def documenter(self) -> AgentProfile:
        return self.member(self.documentation_agent)


@dataclass(frozen=True)
class RouterDecision:
    next: str | None
    raw: str
    retries_used: int = 0
    # prose before the decision line, addressed to the chosen member
    instruction: str = ""
    # true when no valid decision came back and FINISH was assumed
    fallback: bool = False
    usage: TokenUsage | None = None

    @property
    def is_finish(self) -> bool:
        return self.next is None

    @classmethod
    def finish(cls, raw: str, retries_used: int = 0, fallback: bool = False) -> RouterDecision:
        return cls(None, raw, retries_used, fallback=fallback)


@dataclass(frozen=True)
class StepInfo:
    """What agents are told about the step they are working on."""

    id: StepId
    title: str
    instructions: str = ""


# -- loading ---------------------------------------------------------------------


def default_prompts_dir() -> Path:
    return Path(str(resources.files("triz_agents") / "prompts"))


def default_team_file() -> Path:
    return default_prompts_dir() / "team.yaml"


def _split_front_matter(text: str, path: Path) -> tuple[dict, str]:
    if not text.startswith("---\n"):
        raise TeamConfigError(f"{path}: profile needs YAML front matter")
    end = text.find("\n---\n", 4)
    if end < 0:
        raise TeamConfigError(f"{path}: unterminated front matter")
    try:
        meta = yaml.safe_load(text[4:end]) or {}
    except yaml.YAMLError as exc:
        raise TeamConfigError(f"{path}: bad front matter: {exc}") from None
    if not isinstance(meta, dict):
        raise TeamConfigError(f"{path}: front matter must be a mapping")
    return meta, text[end + 5:].strip()


def load_profile(path: Path, registry: ToolRegistry) -> AgentProfile:
    meta, body = _split_front_matter(path.read_text(encoding="utf-8"), path)
    tools = meta.get("tools") or []
    unknown = [t for t in tools if t not in registry.tools]
    if unknown:
        raise TeamConfigError(f"{path}: unknown tools {unknown}")
    try:
        return AgentProfile(
            name=str(meta["name"]),
            role=str(meta["role"]),
            responsibilities=body,
            context_mode=meta.get("context_mode", ContextMode.DOCS_AND_MESSAGES),
            toolset=tuple(registry.tools[t].descriptor for t in tools),
            extra_instructions=str(meta.get("extra_instructions") or "").strip(),
            required_tools=tuple(meta.get("required_tools") or ()),
        )
    except KeyError as exc:
        raise TeamConfigError(f"{path}: missing front matter key {exc}") from None
    except ValueError as exc:
        raise TeamConfigError(f"{path}: {exc}") from None


def load_team(
    registry: ToolRegistry,
    team_file: Path | str | None = None,
    prompts_dir: Path | str | None = None,
) -> Team:
    """Read the roster file and one profile per agent; grant tools in ``registry``."""
    team_path = Path(team_file) if team_file is not None else default_team_file()
    prompts_root = Path(prompts_dir) if prompts_dir is not None else default_prompts_dir()
    try:
        spec = yaml.safe_load(team_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise TeamConfigError(f"team file not found: {team_path}") from None
    except yaml.YAMLError as exc:
        raise TeamConfigError(f"{team_path}: {exc}") from None
    if not isinstance(spec, dict) or not spec.get("members") or not spec.get("supervisor"):
        raise TeamConfigError(f"{team_path}: needs 'supervisor' and 'members'")

    def profile(name: str) -> AgentProfile:
        path = prompts_root / "agents" / f"{name}.md"
        if not path.is_file():
            raise TeamConfigError(f"no profile file for agent {name!r} at {path}")
        p = load_profile(path, registry)
        if p.name != name:
            raise TeamConfigError(f"{path}: declares name {p.name!r}, expected {name!r}")
        return p

    members = tuple(profile(n) for n in spec["members"])
    supervisor = profile(spec["supervisor"])
    for m in members:
        registry.grant(m.name, m.tool_names)
    return Team(
        members=members,
        supervisor=supervisor,
        documentation_agent=spec.get("documentation_agent", "DocumentationSpecialist"),
        prompts=Prompts.load(prompts_root),
        registry=registry,
    )


def build_default_team(kb: KnowledgeBase, registry: ToolRegistry | None = None) -> Team:
    """The seven workers plus ProjectManager, as shipped with the package.

    Without a registry, one is built with an empty offline search fixture.
    """
    if registry is None:
        registry = build_registry(kb, FixtureSearch({}))
    return load_team(registry)


# -- prompt assembly ---------------------------------------------------------------


def render_profile(team: Team, profile: AgentProfile, context: str) -> str:
    responsibilities = profile.responsibilities
    if profile.extra_instructions:
        responsibilities += "\n\n" + profile.extra_instructions
    if profile.required_tools:
        responsibilities += "\n\n" + REQUIRED_TOOLS_TEXT.format(tools=", ".join(profile.required_tools))
    return team.prompts.worker_profile.render(
        {"name": profile.name, "role": profile.role, "responsibilities": responsibilities, "context": context}
    )


def worker_context(team: Team, step: StepInfo, docs: Sequence[StepDocument]) -> str:
    return team.prompts.worker_context.render(
        {
            "step_title": step.title,
            "step_instructions": step.instructions,
            "steps_documentation": render_documents(docs),
        }
    )


def visible_messages(agent: str, messages: Sequence[Message]) -> list[Message]:
    """The part of a step transcript ``agent`` may see, as model input.

    The agent's own answers and tool exchanges keep their roles. Answers by
    anyone else become human messages, and their tool exchanges are left out.
    """
    out: list[Message] = []
    own_calls: set[str] = set()
    for m in messages:
        if m.role is Role.AI and m.sender == agent:
            own_calls.update(c.id for c in m.tool_calls)
            out.append(m)
        elif m.role is Role.AI:
            if m.content and not m.tool_calls:
                out.append(demote_to_human(m))
        elif m.role is Role.TOOL:
            if m.tool_call_id in own_calls:
                out.append(m)
        elif m.role is Role.HUMAN:
            out.append(m)
    return out


def assemble_context(
    team: Team,
    profile: AgentProfile,
    step: StepInfo,
    docs: Sequence[StepDocument],
    messages: Sequence[Message],
) -> list[Message]:
    prompt = render_profile(team, profile, worker_context(team, step, docs))
    if profile.context_mode is ContextMode.FULL_MESSAGES:
        record = render_messages(messages, tool_result_limit=None) or "(nothing said yet)"
        return [system(prompt), human(f"Record of the current step:\n\n{record}")]
    return [system(prompt), *visible_messages(profile.name, messages)]


# -- metering hook -------------------------------------------------------------------


class CallHook(Protocol):
    """Observer for node calls. ``before`` may raise to stop the call."""

    def before(self, kind: str, agent: str) -> None: ...

    def after_model(self, agent: str, usage: TokenUsage) -> None: ...


class NullHook:
    def before(self, kind: str, agent: str) -> None:
        pass

    def after_model(self, agent: str, usage: TokenUsage) -> None:
        pass


def call_model(
    backend: ChatBackend,
    req: ChatRequest,
    kind: str,
    hook: CallHook,
) -> ChatResponse:
    hook.before(kind, req.agent)
    resp = backend.complete(req)
    hook.after_model(req.agent, resp.usage)
    return resp


@dataclass(frozen=True)
class ModelSettings:
    model: str = "gpt-4o"
    temperature: float = 0.5
    agent_temperatures: Mapping[str, float] = field(default_factory=dict)
    max_output_tokens: int | None = None

    def request(
        self, agent: str, step: StepId, messages: Sequence[Message], tools: Sequence[ToolDescriptor] = ()
    ) -> ChatRequest:
        return ChatRequest(
            messages=tuple(messages),
            model=self.model,
            tools=tuple(tools),
            temperature=self.agent_temperatures.get(agent, self.temperature),
            max_output_tokens=self.max_output_tokens,
            agent=agent,
            step=step,
        )


# -- routing ------------------------------------------------------------------------

_PUNCT = str.maketrans("", "", string.punctuation + "‘’“”–—…")
_SPACE = re.compile(r"\s+")


def normalize_token(text: str) -> str:
    return _SPACE.sub("", text.strip().translate(_PUNCT)).casefold()


def parse_route(raw: str | None, members: Sequence[str]) -> tuple[str | None, str] | None:
    """Match the last non-empty line of ``raw`` against ``members`` and FINISH.

    Returns ``(member or None for FINISH, instruction prose)`` or ``None`` when
    the decision line does not match anything.
    """
    if not raw:
        return None
    lines = [ln for ln in raw.strip().splitlines() if ln.strip()]
    if not lines:
        return None
    token = normalize_token(lines[-1])
    instruction = "\n".join(lines[:-1]).strip()
    if token == normalize_token(FINISH):
        return None, instruction
    for name in members:
        if token == normalize_token(name):
            return name, instruction
    return None


def route_next(
    backend: ChatBackend,
    team: Team,
    step: StepInfo,
    messages: Sequence[Message],
    step_docs: Sequence[StepDocument],
    *,
    settings: ModelSettings | None = None,
    max_retries: int = DEFAULT_MAX_ROUTER_RETRIES,
    hook: CallHook | None = None,
) -> RouterDecision:
    settings = settings or ModelSettings()
    hook = hook or NullHook()
    sup = team.supervisor.name
    names = ", ".join(team.member_names)
    prompt = team.prompts.supervisor.render(
        {
            "messages": render_messages(messages) or "(nothing said yet)",
            "steps_documentation": render_documents(step_docs),
            "members_names": names,
            "step_title": step.title,
            "step_instructions": step.instructions,
        }
    )
    convo: list[Message] = [system(prompt), human(ROUTER_TRIGGER_TEXT)]
    raw = ""
    for attempt in range(max_retries + 1):
        resp = call_model(backend, settings.request(sup, step.id, convo), "routing", hook)
        raw = resp.content or ""
        parsed = parse_route(raw, team.member_names)
        if parsed is not None:
            target, instruction = parsed
            return RouterDecision(target, raw, attempt, instruction, usage=resp.usage)
        logger.info("router output not understood (attempt %d): %r", attempt + 1, raw[:200])
        if raw.strip():
            convo.append(Message(Role.AI, sup, raw))
        convo.append(human(team.prompts.router_retry.render({"members_names": names})))
    logger.warning("supervisor gave no valid decision after %d re-asks; finishing the step", max_retries)
    return RouterDecision.finish(raw, max_retries, fallback=True)


# -- agent turn ------------------------------------------------------------------------


@dataclass
class AgentTurn:
    answer: Message
    rounds: list[tuple[ToolCall, ToolResult]] = field(default_factory=list)
    messages: list[Message] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        yield self.answer
        yield self.rounds


def _ai_message(agent: str, resp: ChatResponse) -> Message:
    return Message(Role.AI, agent, resp.content or "", tool_calls=resp.tool_calls, usage=resp.usage)


def invoke_agent(
    backend: ChatBackend,
    profile: AgentProfile,
    context: Sequence[Message],
    *,
    registry: ToolRegistry,
    step: StepId,
    settings: ModelSettings | None = None,
    max_tool_rounds: int = DEFAULT_MAX_TOOL_ROUNDS,
    hook: CallHook | None = None,
    emit: Callable[[Message], None] | None = None,
) -> AgentTurn:
    """Run one agent turn: answer directly, or call tools and answer afterwards.

    Each produced message is passed to ``emit`` as soon as it exists, so a
    turn cut short by a limit still leaves a consistent record.
    """
    settings = settings or ModelSettings()
    hook = hook or NullHook()
    emit = emit or (lambda m: None)
    convo = list(context)
    turn = AgentTurn(answer=None)  # type: ignore[arg-type]

    def record(m: Message) -> None:
        convo.append(m)
        turn.messages.append(m)
        emit(m)

    rounds = 0
    tools = profile.toolset
    used: set[str] = set()
    reminded = False
    while True:
        forced = rounds >= max_tool_rounds
        if forced:
            req = settings.request(profile.name, step, [*convo, human(FORCE_ANSWER_TEXT)])
        else:
            req = settings.request(profile.name, step, convo, tools)
        resp = call_model(backend, req, "agent", hook)
        if not resp.tool_calls:
            unused = [t for t in profile.required_tools if t not in used]
            if unused and not forced and not reminded:
                # one reminder per turn; the early answer stays out of the transcript
                logger.info("%s answered without required tools %s; reminding once", profile.name, unused)
                reminded = True
                convo.append(_ai_message(profile.name, resp) if resp.content else human("(no answer)"))
                convo.append(human(REQUIRED_TOOLS_TEXT.format(tools=", ".join(unused))))
                continue
            if not resp.content:
                resp = ChatResponse("(no answer)", usage=resp.usage)
            answer = _ai_message(profile.name, resp)
            record(answer)
            turn.answer = answer
            return turn
        if forced:
            raise ToolRoundCapExceeded(profile.name, rounds)
        record(_ai_message(profile.name, resp))
        for call in resp.tool_calls:
            used.add(call.name)
            hook.before("tool", profile.name)
            result = registry.dispatch(profile.name, call)
            turn.rounds.append((call, result))
            record(Message(Role.TOOL, call.name, result.content, tool_call_id=call.id))
        rounds += 1
