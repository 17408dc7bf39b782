"""Tool descriptors, results and the per-agent dispatching registry."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping

from ..conversation import ToolCall

logger = logging.getLogger(__name__)

_JSON_TYPES: dict[str, tuple[type, ...]] = {
    "string": (str,),
    "integer": (int,),
    "number": (int, float),
    "boolean": (bool,),
    "array": (list,),
    "object": (dict,),
}


class ToolError(Exception):
    """Raised by tool handlers; reported back to the agent as text."""


class BadArguments(ToolError):
    def __init__(self, field_name: str | None, reason: str):
        where = f"argument {field_name!r}: " if field_name else ""
        super().__init__(f"{where}{reason}")
        self.field = field_name


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str
    description: str = ""
    required: bool = True
    items: str | None = None
    # some parameters accept either an id or a name
    alt_types: tuple[str, ...] = ()

    def schema(self) -> dict[str, Any]:
        if self.alt_types:
            out: dict[str, Any] = {"anyOf": [{"type": t} for t in (self.type, *self.alt_types)]}
        else:
            out = {"type": self.type}
        if self.items:
            out["items"] = {"type": self.items}
        if self.description:
            out["description"] = self.description
        return out


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    parameters: tuple[ToolParam, ...] = ()

    def json_schema(self) -> dict[str, Any]:
        return {
            "type": "object",
            "properties": {p.name: p.schema() for p in self.parameters},
            "required": [p.name for p in self.parameters if p.required],
        }

    def to_wire(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {"name": self.name, "description": self.description, "parameters": self.json_schema()},
        }

    def parse_arguments(self, raw: str) -> dict[str, Any]:
        try:
            args = json.loads(raw) if raw.strip() else {}
        except json.JSONDecodeError as exc:
            raise BadArguments(None, f"arguments are not valid JSON ({exc.msg} at position {exc.pos})") from None
        if not isinstance(args, dict):
            raise BadArguments(None, "arguments must be a JSON object")
        for p in self.parameters:
            if p.name not in args:
                if p.required:
                    raise BadArguments(p.name, "is required")
                continue
            value = args[p.name]
            allowed = tuple(t for name in (p.type, *p.alt_types) for t in _JSON_TYPES[name])
            if isinstance(value, bool) and bool not in allowed:
                raise BadArguments(p.name, f"expected {p.type}, got boolean")
            if not isinstance(value, allowed):
                raise BadArguments(p.name, f"expected {p.type}, got {type(value).__name__}")
            if p.items and isinstance(value, list):
                item_types = _JSON_TYPES[p.items]
                for item in value:
                    if isinstance(item, bool) or not isinstance(item, item_types):
                        raise BadArguments(p.name, f"every item must be {p.items}")
        return args


@dataclass(frozen=True)
class ToolResult:
    call_id: str
    content: str
    ok: bool = True
    diagnostics: str | None = None

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("tool result content must not be empty")


Handler = Callable[[Mapping[str, Any]], str]


@dataclass(frozen=True)
class Tool:
    descriptor: ToolDescriptor
    handler: Handler

    @property
    def name(self) -> str:
        return self.descriptor.name


@dataclass
class ToolRegistry:
    """Known tools plus the toolset granted to each agent."""

    tools: dict[str, Tool] = field(default_factory=dict)
    grants: dict[str, list[str]] = field(default_factory=dict)

    def register(self, tool: Tool) -> Tool:
        if tool.name in self.tools:
            raise ValueError(f"tool {tool.name!r} already registered")
        self.tools[tool.name] = tool
        return tool

    def grant(self, agent: str, names: Iterable[str]) -> None:
        current = self.grants.setdefault(agent, [])
        for name in names:
            if name not in self.tools:
                raise KeyError(f"cannot grant unknown tool {name!r}")
            if name not in current:
                current.append(name)

    def toolset(self, agent: str) -> list[ToolDescriptor]:
        return [self.tools[n].descriptor for n in self.grants.get(agent, [])]

    def dispatch(self, agent: str, call: ToolCall) -> ToolResult:
        return dispatch_tool(self, agent, call)


def _failure(call: ToolCall, message: str) -> ToolResult:
    return ToolResult(call.id, f"Error calling {call.name}: {message}", ok=False, diagnostics=message)


def dispatch_tool(registry: ToolRegistry, agent: str, call: ToolCall) -> ToolResult:
    """Run ``call`` for ``agent``. Failures come back as ``ok=False`` results."""
    if call.name not in registry.grants.get(agent, []):
        return _failure(call, f"unknown tool {call.name!r} for agent {agent}")
    tool = registry.tools[call.name]
    try:
        args = tool.descriptor.parse_arguments(call.arguments)
        content = tool.handler(args)
    except BadArguments as exc:
        return _failure(call, f"bad arguments: {exc}")
    except Exception as exc:  # tool failures must never abort the run
        logger.info("tool %s failed for %s: %s", call.name, agent, exc)
        return _failure(call, str(exc) or type(exc).__name__)
    return ToolResult(call.id, content or "(empty result)")
