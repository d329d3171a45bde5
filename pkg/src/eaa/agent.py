"""Tool registry, schema generation, and sequential dispatch with approval gating.

Schemas are generated from explicit per-tool parameter declarations rather
than reflection, so for a fixed registration order the emitted JSON is
byte-identical run to run.  Dispatch is strictly sequential: one call at a
time, in the order the model listed them, with per-call failures captured as
error results rather than crashes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Iterable, Optional, Sequence

from .context import (
    Message,
    MissingImageFile,
    ToolCall,
    ToolResult,
    aux_image_message,
    tool_message,
    utc_now,
)


class AgentError(Exception):
    pass


class DuplicateToolName(AgentError):
    pass


@dataclass(frozen=True)
class ToolParam:
    """One declared tool parameter (JSON Schema fragment source)."""

    name: str
    type: str  # "number" | "integer" | "string" | "boolean"
    description: str = ""
    required: bool = True
    minimum: float | None = None
    maximum: float | None = None


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str
    parameters: dict[str, Any]

    def as_openai(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters,
            },
        }

    def canonical_json(self) -> str:
        return json.dumps(self.parameters, separators=(",", ":"))


@dataclass
class ToolOutput:
    """What a tool body returns; the registry turns it into a ToolResult."""

    text: str
    image_paths: tuple[str, ...] = ()


class Tool:
    """Base class for stateful tools.

    Subclasses set ``name``, ``description``, ``params``, and implement
    ``call``.  ``high_risk`` marks tools (code execution and the like) whose
    default policy requires human approval.
    """

    name: str = ""
    description: str = ""
    params: tuple[ToolParam, ...] = ()
    produces_images: bool = False
    high_risk: bool = False

    def call(self, **kwargs) -> ToolOutput:
        raise NotImplementedError

    def parameters_schema(self) -> dict[str, Any]:
        properties: dict[str, Any] = {}
        required: list[str] = []
        for p in self.params:
            prop: dict[str, Any] = {"type": p.type}
            if p.description:
                prop["description"] = p.description
            if p.minimum is not None:
                prop["minimum"] = p.minimum
            if p.maximum is not None:
                prop["maximum"] = p.maximum
            properties[p.name] = prop
            if p.required:
                required.append(p.name)
        return {"type": "object", "properties": properties, "required": required}

    def schema(self) -> ToolSchema:
        return ToolSchema(
            name=self.name, description=self.description, parameters=self.parameters_schema()
        )


@dataclass
class ToolPolicy:
    requires_approval: bool = False
    limits: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class ApprovalDecision:
    call_id: str
    approved: bool
    decider: str
    at: datetime


# An approval source answers: may this call run?  Returning a bool is enough;
# richer sources may return an ApprovalDecision.
ApprovalSource = Callable[[ToolCall], "bool | ApprovalDecision"]


def validate_arguments(tool: Tool, policy: ToolPolicy, args: dict[str, Any]) -> str | None:
    """Return an error description, or None when the arguments pass all checks."""
    declared = {p.name: p for p in tool.params}
    for p in tool.params:
        if p.required and p.name not in args:
            return f"missing required parameter {p.name!r}"
    for name, value in args.items():
        p = declared.get(name)
        if p is None:
            return f"unknown parameter {name!r}"
        if p.type in ("number", "integer"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return f"parameter {name!r} must be a {p.type}"
            if p.type == "integer" and int(value) != value:
                return f"parameter {name!r} must be an integer"
            lo = p.minimum
            hi = p.maximum
            if name in policy.limits:
                plo, phi = policy.limits[name]
                lo = plo if lo is None else max(lo, plo)
                hi = phi if hi is None else min(hi, phi)
            if lo is not None and value < lo:
                return f"parameter {name!r}={value} below the allowed minimum {lo}"
            if hi is not None and value > hi:
                return f"parameter {name!r}={value} above the allowed maximum {hi}"
        elif p.type == "string" and not isinstance(value, str):
            return f"parameter {name!r} must be a string"
        elif p.type == "boolean" and not isinstance(value, bool):
            return f"parameter {name!r} must be a boolean"
    return None


class ToolRegistry:
    """Ordered name -> (tool, policy) map with deterministic schema output."""

    def __init__(self) -> None:
        self._tools: dict[str, Tool] = {}
        self._policies: dict[str, ToolPolicy] = {}
        self.approval_log: dict[str, ApprovalDecision] = {}

    def register(self, tool: Tool, policy: ToolPolicy | None = None) -> None:
        if not tool.name:
            raise AgentError("tool has no name")
        if tool.name in self._tools:
            raise DuplicateToolName(f"tool {tool.name!r} is already registered")
        self._tools[tool.name] = tool
        self._policies[tool.name] = policy or ToolPolicy(requires_approval=tool.high_risk)

    def names(self) -> list[str]:
        return list(self._tools)

    def get(self, name: str) -> Tool:
        return self._tools[name]

    def policy(self, name: str) -> ToolPolicy:
        return self._policies[name]

    def set_policy(self, name: str, policy: ToolPolicy) -> None:
        if name not in self._tools:
            raise KeyError(name)
        self._policies[name] = policy

    def schemas(self) -> list[ToolSchema]:
        return [tool.schema() for tool in self._tools.values()]

    def schemas_json(self) -> str:
        return json.dumps(
            [s.as_openai() for s in self.schemas()], separators=(",", ":")
        )

    def subset(self, names: Iterable[str]) -> "ToolRegistry":
        out = ToolRegistry()
        for name in names:
            out.register(self._tools[name], self._policies[name])
        return out

    # -- dispatch -------------------------------------------------------------

    def execute_calls(
        self,
        calls: Sequence[ToolCall],
        approval_source: Optional[ApprovalSource] = None,
        on_event: Optional[Callable[[str, dict[str, Any]], None]] = None,
    ) -> list[ToolResult]:
        """Execute calls strictly in order; every failure becomes an error result."""
        results: list[ToolResult] = []
        for call in calls:
            results.append(self._execute_one(call, approval_source, on_event))
        return results

    def _execute_one(
        self,
        call: ToolCall,
        approval_source: Optional[ApprovalSource],
        on_event: Optional[Callable[[str, dict[str, Any]], None]],
    ) -> ToolResult:
        def emit(kind: str, **payload) -> None:
            if on_event is not None:
                on_event(kind, {"call_id": call.id, "tool_name": call.tool_name, **payload})

        tool = self._tools.get(call.tool_name)
        if tool is None:
            emit("tool_finished", is_error=True)
            return ToolResult(
                call_id=call.id,
                text=f"unknown tool {call.tool_name!r}; available: {', '.join(self._tools)}",
                is_error=True,
            )
        try:
            args = call.arguments()
        except (json.JSONDecodeError, ValueError) as exc:
            emit("tool_finished", is_error=True)
            return ToolResult(call_id=call.id, text=f"invalid arguments: {exc}", is_error=True)

        policy = self._policies[call.tool_name]
        problem = validate_arguments(tool, policy, args)
        if problem is not None:
            emit("tool_finished", is_error=True)
            return ToolResult(
                call_id=call.id, text=f"rejected by guardrail: {problem}", is_error=True
            )

        if policy.requires_approval:
            emit("approval_requested", arguments=args)
            decision = self._decide(call, approval_source)
            self.approval_log.setdefault(call.id, decision)
            if not decision.approved:
                emit("tool_finished", is_error=True, denied=True)
                return ToolResult(
                    call_id=call.id,
                    text=f"tool call {call.tool_name} was denied by {decision.decider}",
                    is_error=True,
                    denied=True,
                )

        emit("tool_started", arguments=args)
        try:
            output = tool.call(**args)
        except Exception as exc:  # tool errors never kill the loop
            emit("tool_finished", is_error=True)
            return ToolResult(
                call_id=call.id, text=f"{type(exc).__name__}: {exc}", is_error=True
            )
        result = ToolResult(
            call_id=call.id, text=output.text, image_paths=tuple(output.image_paths)
        )
        emit("tool_finished", is_error=False)
        return result

    @staticmethod
    def _decide(call: ToolCall, approval_source: Optional[ApprovalSource]) -> ApprovalDecision:
        if approval_source is None:
            return ApprovalDecision(
                call_id=call.id, approved=False, decider="no approval source", at=utc_now()
            )
        verdict = approval_source(call)
        if isinstance(verdict, ApprovalDecision):
            return verdict
        return ApprovalDecision(
            call_id=call.id, approved=bool(verdict), decider="approval_source", at=utc_now()
        )


def postprocess_result(result: ToolResult) -> list[Message]:
    """Rule-based post-processing: the tool message, plus the auxiliary image
    user-proxy message when the result carries images."""
    messages = [tool_message(result)]
    if result.image_paths:
        from pathlib import Path

        for p in result.image_paths:
            if not Path(p).is_file():
                raise MissingImageFile(f"tool result references missing image {p!r}")
        messages.append(aux_image_message(result))
    return messages


def register_tool(registry: ToolRegistry, tool: Tool, policy: ToolPolicy | None = None) -> None:
    """Functional spelling of :meth:`ToolRegistry.register`."""
    registry.register(tool, policy)
