"""Run metrics: node calls and token usage, in total and broken down."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .conversation import StepId, TokenUsage

# A node call is one model call (supervisor routing, worker turn, documentation,
# final compilation) or one tool dispatch. Router re-asks and each model call
# inside a tool loop count separately, matching one graph-node execution each.
NODE_CALL_DEFINITION = "model calls (routing, agent, documentation, compile) + tool dispatches"

NODE_KINDS = ("routing", "agent", "tool", "documentation", "compile")


def _key(step: StepId) -> str:
    return str(step)


@dataclass
class RunReport:
    run_id: str = ""
    status: str = "running"
    abort_reason: str | None = None
    node_calls: int = 0
    node_calls_by_step: dict[str, int] = field(default_factory=dict)
    node_calls_by_kind: dict[str, int] = field(default_factory=dict)
    usage: TokenUsage = field(default_factory=TokenUsage)
    usage_by_agent: dict[str, TokenUsage] = field(default_factory=dict)
    usage_by_step: dict[str, TokenUsage] = field(default_factory=dict)
    wall_time_s: float = 0.0
    limit_hits: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    started_at: str = ""

    def record_node(self, step: StepId, kind: str) -> None:
        if kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {kind!r}")
        self.node_calls += 1
        k = _key(step)
        self.node_calls_by_step[k] = self.node_calls_by_step.get(k, 0) + 1
        self.node_calls_by_kind[kind] = self.node_calls_by_kind.get(kind, 0) + 1

    def step_node_calls(self, step: StepId) -> int:
        return self.node_calls_by_step.get(_key(step), 0)

    def to_dict(self, deterministic_only: bool = False) -> dict[str, Any]:
        data: dict[str, Any] = {
            "run_id": self.run_id,
            "status": self.status,
            "abort_reason": self.abort_reason,
            "node_call_definition": NODE_CALL_DEFINITION,
            "node_calls": self.node_calls,
            "node_calls_by_step": dict(self.node_calls_by_step),
            "node_calls_by_kind": dict(self.node_calls_by_kind),
            "usage": self.usage.to_dict(),
            "usage_by_agent": {k: v.to_dict() for k, v in self.usage_by_agent.items()},
            "usage_by_step": {k: v.to_dict() for k, v in self.usage_by_step.items()},
            "limit_hits": list(self.limit_hits),
            "artifacts": list(self.artifacts),
        }
        if deterministic_only:
            del data["run_id"]
            del data["artifacts"]
        else:
            data["wall_time_s"] = round(self.wall_time_s, 3)
            data["started_at"] = self.started_at
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunReport:
        return cls(
            run_id=data.get("run_id", ""),
            status=data["status"],
            abort_reason=data.get("abort_reason"),
            node_calls=data["node_calls"],
            node_calls_by_step=dict(data.get("node_calls_by_step", {})),
            node_calls_by_kind=dict(data.get("node_calls_by_kind", {})),
            usage=TokenUsage.from_dict(data["usage"]),
            usage_by_agent={k: TokenUsage.from_dict(v) for k, v in data.get("usage_by_agent", {}).items()},
            usage_by_step={k: TokenUsage.from_dict(v) for k, v in data.get("usage_by_step", {}).items()},
            wall_time_s=data.get("wall_time_s", 0.0),
            limit_hits=list(data.get("limit_hits", [])),
            artifacts=list(data.get("artifacts", [])),
            started_at=data.get("started_at", ""),
        )

    def summary(self) -> str:
        steps = ", ".join(f"{k}={v}" for k, v in self.node_calls_by_step.items())
        return (
            f"status: {self.status}\n"
            f"node calls: {self.node_calls} ({steps})\n"
            f"tokens: {self.usage.total_tokens} "
            f"(prompt {self.usage.prompt_tokens}, completion {self.usage.completion_tokens})\n"
            f"wall time: {self.wall_time_s:.2f}s"
            + (f"\nlimit hits: {', '.join(self.limit_hits)}" if self.limit_hits else "")
        )


def accumulate_usage(
    report: RunReport, u: TokenUsage, *, agent: str | None = None, step: StepId | None = None
) -> RunReport:
    """Add ``u`` to the run totals and to the per-agent / per-step breakdowns."""
    report.usage = report.usage + u
    if agent is not None:
        report.usage_by_agent[agent] = report.usage_by_agent.get(agent, TokenUsage()) + u
    if step is not None:
        k = _key(step)
        report.usage_by_step[k] = report.usage_by_step.get(k, TokenUsage()) + u
    return report
