"""Chat-completion backends.

Two interchangeable implementations sit behind :class:`ChatBackend`:

* :class:`OpenAIChatBackend` speaks the OpenAI-compatible
  ``/chat/completions`` protocol with tool calling.
* :class:`ScriptedBackend` replays responses from a script file keyed by
  ``(agent, step, turn)``, where ``turn`` counts that agent's calls within the
  step. It is what makes runs reproducible.

:class:`RecordingBackend` wraps either one and captures a script that can
later drive a replay.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol

import httpx

from .conversation import Message, Role, StepId, TokenUsage, ToolCall

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o"
DEFAULT_TEMPERATURE = 0.5
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"

SCRIPT_FORMAT = "triz-agents-script"
SCRIPT_VERSION = 1

_WIRE_NAME = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class BackendError(Exception):
    """Any failure talking to the model. Aborts the run."""


class Transport(BackendError):
    def __init__(self, status: int | None, detail: str = ""):
        super().__init__(f"transport error (status={status}): {detail}".rstrip(": "))
        self.status = status


class AuthMissing(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class ScriptExhausted(BackendError):
    def __init__(self, key: tuple[str, StepId, int]):
        super().__init__(f"script exhausted; no entry for {key}")
        self.key = key


class KeyMismatch(BackendError):
    def __init__(self, expected: tuple[str, StepId, int], got: tuple[str, StepId, int]):
        super().__init__(f"script expected request {expected} but got {got}")
        self.expected = expected
        self.got = got


class FinishReason(str, Enum):
    STOP = "stop"
    TOOL_CALLS = "tool_calls"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = DEFAULT_MODEL
    tools: tuple[Any, ...] = ()
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int | None = None
    # routing metadata, never sent on the wire
    agent: str = ""
    step: StepId = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "tools", tuple(self.tools))
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        seen: set[str] = set()
        for m in self.messages:
            seen.update(c.id for c in m.tool_calls)
            if m.role is Role.TOOL and m.tool_call_id not in seen:
                raise ValueError(f"tool message {m.tool_call_id!r} has no prior tool call in the request")

    @property
    def key(self) -> tuple[str, StepId]:
        return (self.agent, self.step)

    def to_wire(self) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [message_to_wire(m) for m in self.messages],
            "temperature": self.temperature,
        }
        if self.tools:
            body["tools"] = [t.to_wire() for t in self.tools]
            body["tool_choice"] = "auto"
        if self.max_output_tokens is not None:
            body["max_tokens"] = self.max_output_tokens
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str | None = None
    tool_calls: tuple[ToolCall, ...] = ()
    usage: TokenUsage = field(default_factory=TokenUsage)
    finish_reason: FinishReason = FinishReason.STOP

    def __post_init__(self) -> None:
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))
        object.__setattr__(self, "finish_reason", FinishReason(self.finish_reason))
        if (self.finish_reason is FinishReason.TOOL_CALLS) != bool(self.tool_calls):
            raise MalformedResponse("finish_reason=tool_calls must coincide with non-empty tool_calls")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"content": self.content}
        if self.tool_calls:
            data["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        data["usage"] = self.usage.to_dict()
        data["finish_reason"] = self.finish_reason.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ChatResponse:
        calls = tuple(ToolCall(c["id"], c["name"], c.get("arguments", "{}")) for c in data.get("tool_calls", ()))
        reason = data.get("finish_reason") or ("tool_calls" if calls else "stop")
        return cls(
            content=data.get("content"),
            tool_calls=calls,
            usage=TokenUsage.from_dict(data.get("usage", {})),
            finish_reason=FinishReason(reason),
        )

    def to_wire(self) -> dict[str, Any]:
        """OpenAI-shaped response body; the inverse of :func:`parse_wire_response`."""
        message: dict[str, Any] = {"role": "assistant", "content": self.content}
        if self.tool_calls:
            message["tool_calls"] = [
                {"id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments}}
                for c in self.tool_calls
            ]
        return {
            "choices": [{"index": 0, "message": message, "finish_reason": self.finish_reason.value}],
            "usage": self.usage.to_dict(),
        }


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


def message_to_wire(m: Message) -> dict[str, Any]:
    if m.role is Role.SYSTEM:
        return {"role": "system", "content": m.content}
    if m.role is Role.TOOL:
        return {"role": "tool", "tool_call_id": m.tool_call_id, "content": m.content}
    if m.role is Role.HUMAN:
        out: dict[str, Any] = {"role": "user", "content": m.content}
    else:
        out = {"role": "assistant", "content": m.content or None}
        if m.tool_calls:
            out["tool_calls"] = [
                {"id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments}}
                for c in m.tool_calls
            ]
    if m.sender != "user" and _WIRE_NAME.match(m.sender):
        out["name"] = m.sender
    return out


_FINISH_MAP = {
    "stop": FinishReason.STOP,
    "length": FinishReason.LENGTH,
    "tool_calls": FinishReason.TOOL_CALLS,
    "function_call": FinishReason.TOOL_CALLS,
}


def parse_wire_response(body: Any) -> ChatResponse:
    """Parse an OpenAI-compatible chat completion body."""
    try:
        choice = body["choices"][0]
        message = choice["message"]
        raw_calls = message.get("tool_calls") or []
        calls = tuple(
            ToolCall(c["id"], c["function"]["name"], c["function"].get("arguments") or "{}") for c in raw_calls
        )
        raw_usage = body.get("usage") or {}
        usage = TokenUsage(int(raw_usage.get("prompt_tokens", 0)), int(raw_usage.get("completion_tokens", 0)))
    except (KeyError, IndexError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedResponse(f"unexpected response shape: {exc!r}") from None
    content = message.get("content")
    if content is not None and not isinstance(content, str):
        raise MalformedResponse("message content is not text")
    if calls:
        reason = FinishReason.TOOL_CALLS
    else:
        reason = _FINISH_MAP.get(choice.get("finish_reason") or "stop", FinishReason.ERROR)
        if reason is FinishReason.TOOL_CALLS:
            raise MalformedResponse("finish_reason says tool_calls but none were returned")
    return ChatResponse(content=content, tool_calls=calls, usage=usage, finish_reason=reason)


@dataclass
class BackendConfig:
    kind: str = "scripted"
    base_url: str = DEFAULT_BASE_URL
    api_key_env: str = DEFAULT_API_KEY_ENV
    model: str = DEFAULT_MODEL
    temperature: float = DEFAULT_TEMPERATURE
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    script: Path | None = None
    agent_temperatures: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("live", "scripted"):
            raise ValueError(f"backend kind must be 'live' or 'scripted', not {self.kind!r}")
        if self.kind == "live" and (not self.base_url or not self.api_key_env):
            raise ValueError("live backend needs base_url and api_key_env")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def temperature_for(self, agent: str) -> float:
        return self.agent_temperatures.get(agent, self.temperature)


class OpenAIChatBackend:
    """Blocking client for an OpenAI-compatible chat completions endpoint.

    Connection failures, timeouts and 5xx responses are retried with
    exponential backoff. 4xx responses are never retried.
    """

    def __init__(
        self,
        cfg: BackendConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        environ: Mapping[str, str] | None = None,
    ):
        env = os.environ if environ is None else environ
        key = env.get(cfg.api_key_env, "")
        if not key:
            raise AuthMissing(f"environment variable {cfg.api_key_env} is not set")
        self.cfg = cfg
        self._sleep = sleep
        self._client = httpx.Client(
            base_url=cfg.base_url.rstrip("/") + "/",
            headers={"Authorization": f"Bearer {key}", "Content-Type": "application/json"},
            timeout=cfg.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def complete(self, req: ChatRequest) -> ChatResponse:
        body = req.to_wire()
        last: BackendError | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                delay = self.cfg.backoff * 2 ** (attempt - 1)
                logger.warning("retrying chat completion in %.1fs (%s)", delay, last)
                self._sleep(delay)
            try:
                resp = self._client.post("chat/completions", json=body)
            except httpx.TimeoutException as exc:
                last = BackendTimeout(f"request timed out after {self.cfg.timeout}s: {exc}")
                continue
            except httpx.TransportError as exc:
                last = Transport(None, str(exc))
                continue
            if resp.status_code >= 500:
                last = Transport(resp.status_code, resp.text[:200])
                continue
            if resp.status_code >= 400:
                raise Transport(resp.status_code, resp.text[:200])
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedResponse("response body is not JSON") from None
            return parse_wire_response(payload)
        assert last is not None
        raise last


def complete_chat(cfg: BackendConfig, req: ChatRequest, **kwargs: Any) -> ChatResponse:
    backend = make_backend(cfg, **kwargs)
    try:
        return backend.complete(req)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()


# -- scripts -------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptEntry:
    agent: str
    step: StepId
    turn: int
    response: ChatResponse

    @property
    def key(self) -> tuple[str, StepId, int]:
        return (self.agent, self.step, self.turn)

    def to_dict(self) -> dict[str, Any]:
        return {"agent": self.agent, "step": self.step, "turn": self.turn, "response": self.response.to_dict()}


class ScriptError(BackendError):
    pass


@dataclass
class Script:
    entries: list[ScriptEntry] = field(default_factory=list)
    cursor: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def total_usage(self) -> TokenUsage:
        total = TokenUsage()
        for e in self.entries:
            total = total + e.response.usage
        return total

    def dumps(self) -> str:
        lines = [json.dumps({"format": SCRIPT_FORMAT, "version": SCRIPT_VERSION})]
        lines += [json.dumps(e.to_dict(), ensure_ascii=False) for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> Script:
        entries = []
        lines = [ln for ln in text.splitlines()]
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScriptError(f"script line {lineno}: invalid JSON ({exc.msg})") from None
            if lineno == 1 and rec.get("format") == SCRIPT_FORMAT:
                if rec.get("version") != SCRIPT_VERSION:
                    raise ScriptError(f"unsupported script version {rec.get('version')!r}")
                continue
            try:
                entries.append(
                    ScriptEntry(rec["agent"], rec["step"], int(rec["turn"]), ChatResponse.from_dict(rec["response"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ScriptError(f"script line {lineno}: bad entry ({exc!r})") from None
        return cls(entries)

    @classmethod
    def load(cls, path: Path | str) -> Script:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def scripted_complete(script: Script, turns: dict[tuple[str, StepId], int], req: ChatRequest) -> ChatResponse:
    """Return the entry at the script cursor if it matches the request key.

    ``turns`` tracks how many calls each ``(agent, step)`` pair has made and is
    updated in place along with ``script.cursor``.
    """
    got = (req.agent, req.step, turns.get(req.key, 0))
    if script.cursor >= len(script.entries):
        raise ScriptExhausted(got)
    entry = script.entries[script.cursor]
    if entry.key != got:
        raise KeyMismatch(entry.key, got)
    script.cursor += 1
    turns[req.key] = got[2] + 1
    return entry.response


class ScriptedBackend:
    def __init__(self, script: Script):
        self.script = script
        self.turns: dict[tuple[str, StepId], int] = {}

    @classmethod
    def from_file(cls, path: Path | str) -> ScriptedBackend:
        return cls(Script.load(path))

    def complete(self, req: ChatRequest) -> ChatResponse:
        return scripted_complete(self.script, self.turns, req)

    @property
    def remaining(self) -> int:
        return len(self.script.entries) - self.script.cursor


class RecordingBackend:
    """Pass-through backend that records every exchange as a script entry."""

    def __init__(self, inner: ChatBackend):
        self.inner = inner
        self.script = Script()
        self._turns: dict[tuple[str, StepId], int] = {}
        self.requests: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.requests.append(req)
        resp = self.inner.complete(req)
        turn = self._turns.get(req.key, 0)
        self._turns[req.key] = turn + 1
        self.script.entries.append(ScriptEntry(req.agent, req.step, turn, resp))
        return resp


def make_backend(cfg: BackendConfig, **kwargs: Any) -> ChatBackend:
    if cfg.kind == "scripted":
        if cfg.script is None:
            raise ValueError("scripted backend needs a script file")
        return ScriptedBackend.from_file(cfg.script)
    return OpenAIChatBackend(cfg, **kwargs)


def sum_usage(usages: Iterable[TokenUsage]) -> TokenUsage:
    total = TokenUsage()
    for u in usages:
        total = total + u
    return total

