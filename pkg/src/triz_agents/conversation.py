"""Messages, transcripts, prompt templates and the documents a run produces."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

TRANSCRIPT_FORMAT = "triz-agents-transcript"
TRANSCRIPT_VERSION = 1

# Prefix added to a model-authored message when another agent is shown it.
DEMOTION_PREFIX = "[{sender}]: "

StepId = int | str


class Role(str, Enum):
    SYSTEM = "system"
    HUMAN = "human"
    AI = "ai"
    TOOL = "tool"


class ConversationError(Exception):
    pass


class MissingInput(ConversationError):
    def __init__(self, name: str):
        super().__init__(f"missing template input: {name}")
        self.name = name


class UnknownPlaceholder(ConversationError):
    def __init__(self, names: Sequence[str]):
        super().__init__("inputs not used by template: " + ", ".join(sorted(names)))
        self.names = list(names)


class TemplateSyntaxError(ConversationError):
    pass


class NotAiMessage(ConversationError):
    pass


class HasPendingToolCalls(ConversationError):
    pass


class OrphanToolResult(ConversationError):
    pass


class InvalidMessage(ConversationError):
    pass


class ParseError(ConversationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: TokenUsage) -> TokenUsage:
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TokenUsage:
        usage = cls(int(data.get("prompt_tokens", 0)), int(data.get("completion_tokens", 0)))
        if "total_tokens" in data and int(data["total_tokens"]) != usage.total_tokens:
            raise ValueError(
                f"total_tokens {data['total_tokens']} != prompt + completion ({usage.total_tokens})"
            )
        return usage


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: str = "{}"

    def to_dict(self) -> dict[str, str]:
        return {"id": self.id, "name": self.name, "arguments": self.arguments}


@dataclass(frozen=True)
class Message:
    role: Role
    sender: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None
    usage: TokenUsage | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        if self.tool_calls and self.role is not Role.AI:
            raise InvalidMessage("only ai messages may carry tool calls")
        if self.role is Role.TOOL and not self.tool_call_id:
            raise InvalidMessage("tool message needs a tool_call_id")
        if self.role is not Role.TOOL and self.tool_call_id is not None:
            raise InvalidMessage("only tool messages carry a tool_call_id")
        if not self.content and not self.tool_calls:
            raise InvalidMessage("message content is empty")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"role": self.role.value, "sender": self.sender, "content": self.content}
        if self.tool_calls:
            data["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        if self.tool_call_id is not None:
            data["tool_call_id"] = self.tool_call_id
        if self.usage is not None:
            data["usage"] = self.usage.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Message:
        usage = data.get("usage")
        return cls(
            role=Role(data["role"]),
            sender=data["sender"],
            content=data.get("content", ""),
            tool_calls=tuple(
                ToolCall(c["id"], c["name"], c.get("arguments", "{}")) for c in data.get("tool_calls", ())
            ),
            tool_call_id=data.get("tool_call_id"),
            usage=TokenUsage.from_dict(usage) if usage is not None else None,
        )


def human(content: str, sender: str = "user") -> Message:
    return Message(Role.HUMAN, sender, content)


def system(content: str, sender: str = "system") -> Message:
    return Message(Role.SYSTEM, sender, content)


@dataclass
class Transcript:
    """Append-only message log for one workflow step.

    ``roster`` is the set of agent names allowed to author ai messages;
    ``None`` disables that check.
    """

    step: StepId
    messages: list[Message] = field(default_factory=list)
    roster: frozenset[str] | None = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def pending_call_ids(self) -> set[str]:
        ids: set[str] = set()
        for m in self.messages:
            ids.update(c.id for c in m.tool_calls)
        return ids

    def append(self, message: Message) -> Transcript:
        return append_message(self, message)


def append_message(t: Transcript, m: Message) -> Transcript:
    if m.role is Role.TOOL and m.tool_call_id not in t.pending_call_ids():
        raise OrphanToolResult(f"tool result {m.tool_call_id!r} has no matching tool call")
    if m.role is Role.AI and t.roster is not None and m.sender not in t.roster:
        raise InvalidMessage(f"ai message from unregistered agent {m.sender!r}")
    t.messages.append(m)
    return t


def demote_to_human(m: Message) -> Message:
    """Re-label an agent's answer as a human turn so another model can read it."""
    if m.role is not Role.AI:
        raise NotAiMessage(f"cannot demote a {m.role.value} message")
    if m.tool_calls:
        raise HasPendingToolCalls("answer still has tool calls; finish the tool round first")
    return replace(m, role=Role.HUMAN, content=DEMOTION_PREFIX.format(sender=m.sender) + m.content)


def strip_demotion(m: Message) -> str:
    prefix = DEMOTION_PREFIX.format(sender=m.sender)
    return m.content[len(prefix):] if m.content.startswith(prefix) else m.content


# -- persistence ---------------------------------------------------------------


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def _header(step: StepId | None) -> str:
    return _dumps({"format": TRANSCRIPT_FORMAT, "version": TRANSCRIPT_VERSION, "step": step})


def transcript_header(step: StepId | None = None) -> str:
    """Header line of a transcript file; ``None`` for a multi-step run file."""
    return _header(step)


def message_record(step: StepId, m: Message) -> str:
    """One transcript line (without the newline)."""
    return _dumps({"step": step, **m.to_dict()})


def serialize_transcripts(transcripts: Iterable[Transcript]) -> str:
    """One header line, then one message per line tagged with its step."""
    lines = [_header(None)]
    for t in transcripts:
        lines += [message_record(t.step, m) for m in t.messages]
    return "\n".join(lines) + "\n"


def serialize_transcript(t: Transcript) -> str:
    lines = [_header(t.step)]
    lines += [message_record(t.step, m) for m in t.messages]
    return "\n".join(lines) + "\n"


def _parse_lines(text: str) -> tuple[dict[str, Any], list[tuple[int, dict[str, Any]]]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    else:
        # a complete file always ends with a newline
        raise ParseError(max(len(lines), 1), "file is truncated (no trailing newline)")
    if not lines:
        raise ParseError(1, "missing header line")
    records = []
    for lineno, line in enumerate(lines, start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise ParseError(lineno, "record is not an object")
        records.append((lineno, obj))
    header = records[0][1]
    if header.get("format") != TRANSCRIPT_FORMAT:
        raise ParseError(1, "not a transcript header")
    if header.get("version") != TRANSCRIPT_VERSION:
        raise ParseError(1, f"unsupported transcript version {header.get('version')!r}")
    return header, records[1:]


def parse_transcripts(text: str, roster: frozenset[str] | None = None) -> list[Transcript]:
    _, records = _parse_lines(text)
    out: list[Transcript] = []
    by_step: dict[StepId, Transcript] = {}
    for lineno, rec in records:
        if "step" not in rec:
            raise ParseError(lineno, "record has no step")
        step = rec["step"]
        try:
            msg = Message.from_dict(rec)
        except (KeyError, ValueError, ConversationError) as exc:
            raise ParseError(lineno, f"bad message: {exc}") from None
        t = by_step.get(step)
        if t is None:
            t = by_step[step] = Transcript(step, roster=roster)
            out.append(t)
        elif out[-1] is not t:
            raise ParseError(lineno, f"step {step!r} interleaves with another step")
        try:
            append_message(t, msg)
        except ConversationError as exc:
            raise ParseError(lineno, str(exc)) from None
    return out


def parse_transcript(text: str, roster: frozenset[str] | None = None) -> Transcript:
    header, _ = _parse_lines(text)
    transcripts = parse_transcripts(text, roster)
    if len(transcripts) > 1:
        raise ParseError(1, "document holds more than one step")
    if transcripts:
        return transcripts[0]
    return Transcript(header.get("step"), roster=roster)


# -- prompt templates ----------------------------------------------------------

_TOKEN = re.compile(r"\{\{|\}\}|\{([A-Za-z_][A-Za-z0-9_]*)\}|[{}]")


@dataclass(frozen=True)
class Placeholder:
    name: str


@dataclass(frozen=True)
class PromptTemplate:
    """Literal text with ``{name}`` placeholders; ``{{`` and ``}}`` escape braces."""

    segments: tuple[str | Placeholder, ...]

    @classmethod
    def parse(cls, text: str) -> PromptTemplate:
        segments: list[str | Placeholder] = []
        buf: list[str] = []
        pos = 0
        for m in _TOKEN.finditer(text):
            buf.append(text[pos:m.start()])
            tok = m.group(0)
            if tok in ("{{", "}}"):
                buf.append(tok[0])
            elif m.group(1):
                if buf:
                    segments.append("".join(buf))
                    buf = []
                segments.append(Placeholder(m.group(1)))
            else:
                line = text.count("\n", 0, m.start()) + 1
                raise TemplateSyntaxError(f"unbalanced {tok!r} at line {line}")
            pos = m.end()
        buf.append(text[pos:])
        if "".join(buf):
            segments.append("".join(buf))
        return cls(tuple(s for s in segments if s != ""))

    @property
    def placeholders(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.segments:
            if isinstance(s, Placeholder):
                seen.setdefault(s.name)
        return list(seen)

    def render(self, inputs: Mapping[str, str], strict: bool = False) -> str:
        return render_template(self, inputs, strict=strict)


def render_template(t: PromptTemplate, inputs: Mapping[str, str], strict: bool = False) -> str:
    """Substitute every placeholder in one pass.

    Extra inputs are logged as a warning, or raise :class:`UnknownPlaceholder`
    when ``strict`` is set.
    """
    names = t.placeholders
    for name in names:
        if name not in inputs:
            raise MissingInput(name)
    extra = set(inputs) - set(names)
    if extra:
        if strict:
            raise UnknownPlaceholder(sorted(extra))
        logger.warning("template inputs not used: %s", ", ".join(sorted(extra)))
    return "".join(s if isinstance(s, str) else str(inputs[s.name]) for s in t.segments)


# -- documents -----------------------------------------------------------------


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def _iso(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_front_matter(text: str) -> tuple[dict[str, str], str]:
    if not text.startswith("---\n"):
        raise ValueError("document has no front matter")
    end = text.find("\n---\n", 4)
    if end < 0:
        raise ValueError("unterminated front matter")
    meta = {}
    for line in text[4:end].splitlines():
        key, _, value = line.partition(": ")
        meta[key] = value
    return meta, text[end + 5:].lstrip("\n")


@dataclass(frozen=True)
class StepDocument:
    step: StepId
    title: str
    body: str
    produced_by: str
    created_at: datetime = field(default_factory=utc_now, compare=False)
    truncated: bool = False

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError(f"step {self.step} document body is empty")

    def to_markdown(self) -> str:
        return (
            "---\n"
            f"step: {self.step}\n"
            f"title: {self.title}\n"
            f"produced_by: {self.produced_by}\n"
            f"created_at: {_iso(self.created_at)}\n"
            f"truncated: {str(self.truncated).lower()}\n"
            "---\n\n"
            f"# Step {self.step}: {self.title}\n\n"
            f"{self.body.strip()}\n"
        )

    @classmethod
    def from_markdown(cls, text: str) -> StepDocument:
        meta, rest = _parse_front_matter(text)
        heading, _, body = rest.partition("\n\n")
        step: StepId = int(meta["step"]) if meta["step"].isdigit() else meta["step"]
        return cls(
            step=step,
            title=meta["title"],
            body=body.strip(),
            produced_by=meta["produced_by"],
            created_at=datetime.fromisoformat(meta["created_at"].replace("Z", "+00:00")),
            truncated=meta.get("truncated") == "true",
        )


@dataclass(frozen=True)
class FinalReport:
    body: str
    source_docs: tuple[StepId, ...]
    produced_by: str = "DocumentationSpecialist"
    created_at: datetime = field(default_factory=utc_now, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_docs", tuple(self.source_docs))
        if len(set(self.source_docs)) != len(self.source_docs):
            raise ValueError("final report references a step more than once")
        if not self.body.strip():
            raise ValueError("final report body is empty")

    def to_markdown(self) -> str:
        steps = ", ".join(str(s) for s in self.source_docs)
        return (
            "---\n"
            f"source_docs: {steps}\n"
            f"produced_by: {self.produced_by}\n"
            f"created_at: {_iso(self.created_at)}\n"
            "---\n\n"
            f"{self.body.strip()}\n"
        )

    @classmethod
    def from_markdown(cls, text: str) -> FinalReport:
        meta, body = _parse_front_matter(text)
        docs = tuple(int(s) for s in meta["source_docs"].split(", ") if s)
        return cls(
            body=body.strip(),
            source_docs=docs,
            produced_by=meta["produced_by"],
            created_at=datetime.fromisoformat(meta["created_at"].replace("Z", "+00:00")),
        )


TIMESTAMP_LINE = re.compile(r"^created_at: .*$", re.MULTILINE)


def mask_timestamps(text: str) -> str:
    """Blank out document timestamps so artifacts can be compared across runs."""
    return TIMESTAMP_LINE.sub("created_at: <masked>", text)


# -- rendering conversation for prompts ----------------------------------------


def render_messages(messages: Iterable[Message], tool_result_limit: int | None = 600) -> str:
    """Plain-text view of a conversation for prompts that take it as text."""
    parts = []
    for m in messages:
        if m.role is Role.TOOL:
            body = m.content
            if tool_result_limit is not None and len(body) > tool_result_limit:
                body = body[:tool_result_limit] + " [...]"
            parts.append(f"[{m.sender} result]: {body}")
            continue
        if m.content:
            parts.append(f"[{m.sender}]: {strip_demotion(m)}")
        for c in m.tool_calls:
            parts.append(f"[{m.sender}] called {c.name} with {c.arguments}")
    return "\n\n".join(parts)


def render_documents(docs: Iterable[StepDocument]) -> str:
    docs = list(docs)
    if not docs:
        return "(no steps documented yet)"
    return "\n\n".join(f"## Step {d.step}: {d.title}\n\n{d.body.strip()}" for d in docs)
