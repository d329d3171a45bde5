"""The chat loop: termination discipline, auto-replies, hooks, soft sequence
guardrails, and nested sub-agent sessions.

Each loop round sends the full context to the model.  Tool calls are executed
strictly sequentially and post-processed into the context; responses with
neither tool calls nor a termination token trigger an auto-reply that keeps
the agent working, up to a configurable cap.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace as dataclass_replace
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Sequence

from .agent import ApprovalSource, ToolRegistry, postprocess_result
from .analysis import phase_correlate
from .beamline import VirtualBeamline
from .context import (
    Context,
    Message,
    Role,
    ToolResult,
    assistant_message,
    auto_message,
    system_message,
    user_message,
)
from .memory import MemoryStore, detect_notable, memory_context_text
from .model import GatewayError, MalformedToolArguments, Model, ModelResponse

logger = logging.getLogger(__name__)

TERMINATE_TOKEN = "TERMINATE"
NEED_HUMAN_TOKEN = "NEED HUMAN"

AUTO_REPLY_TEXT = (
    "Your last response contained no tool calls and no termination signal. "
    "Either make the tool calls needed to continue the task, or reply with "
    "TERMINATE or NEED HUMAN."
)

MALFORMED_ARGS_REPLY = (
    "Your tool call could not be executed because its arguments were not a "
    "valid JSON object ({detail}). Re-issue the call with valid JSON arguments."
)

OVERLAP_QUESTION = "Do the two images overlap? Answer yes or no."


class LoopStatus(str, Enum):
    TERMINATED = "terminated"
    HUMAN_HANDOFF = "human_handoff"
    ROUND_CAP = "round_cap"
    ERROR = "error"


@dataclass
class Hook:
    """Procedure the loop runs when its trigger condition is met.

    ``trigger`` is either ``"before_model_call"`` or ``"after_tool:<name>"``.
    The action receives (session, tool call or None, tool result or None) and
    returns messages to append.  Hook failures are logged and skipped.
    """

    trigger: str
    action: Callable[["Session", Any, Optional[ToolResult]], Iterable[Message]]


@dataclass
class LoopConfig:
    initial_prompt: str = ""
    require_signal_or_tool: bool = True
    termination_tokens: tuple[str, ...] = (TERMINATE_TOKEN, NEED_HUMAN_TOKEN)
    max_rounds: int = 64
    max_consecutive_autoreplies: int = 3
    expected_sequence: Optional[tuple[str, ...]] = None
    sequence_start: int = 0
    hooks: tuple[Hook, ...] = ()

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.require_signal_or_tool and not self.termination_tokens:
            raise ValueError("termination tokens required when require_signal_or_tool is set")


@dataclass
class LoopOutcome:
    status: LoopStatus
    transcript: Context
    rounds: int


def find_termination_token(text: str, tokens: Sequence[str]) -> str | None:
    """Case-sensitive whole-word search for any termination token."""
    for tok in tokens:
        if re.search(rf"(?<![A-Za-z0-9_]){re.escape(tok)}(?![A-Za-z0-9_])", text):
            return tok
    return None


class SequenceChecker:
    """Soft guardrail over an expected (cyclic) tool-call order.

    Mismatches produce warnings, never blocks; an immediate repeat of the
    previous tool is treated as a retry and does not advance the sequence.
    """

    def __init__(self, expected: Sequence[str], start: int = 0) -> None:
        if not expected:
            raise ValueError("expected sequence must be nonempty")
        self.expected = tuple(expected)
        self.position = start % len(self.expected)
        self.last_tool: str | None = None

    def check(self, tool_name: str) -> str | None:
        expected_next = self.expected[self.position]
        if tool_name == expected_next:
            self.position = (self.position + 1) % len(self.expected)
            self.last_tool = tool_name
            return None
        if tool_name == self.last_tool:
            return (
                f"Note: {tool_name} was called again right after the previous call; "
                f"the expected next tool is {expected_next}. Proceeding (retries are fine)."
            )
        warning = (
            f"Warning: tool call out of the expected order. Got {tool_name}, "
            f"expected {expected_next}. The call will still be executed."
        )
        if tool_name in self.expected:
            self.position = (self.expected.index(tool_name) + 1) % len(self.expected)
        self.last_tool = tool_name
        return warning


def check_sequence(
    expected: Sequence[str], tool_name: str, position: int, last_tool: str | None = None
) -> tuple[str | None, int]:
    """One-shot spelling of :class:`SequenceChecker` for a single transition."""
    checker = SequenceChecker(expected, position)
    checker.last_tool = last_tool
    warning = checker.check(tool_name)
    return warning, checker.position


class Session:
    """Everything one conversation owns: context, tools, model, instrument."""

    def __init__(
        self,
        session_id: str,
        model: Model,
        registry: Optional[ToolRegistry] = None,
        beamline: Optional[VirtualBeamline] = None,
        memory: Optional[MemoryStore] = None,
        memory_k: int = 4,
        approval_source: Optional[ApprovalSource] = None,
        clock: Callable | None = None,
        system_prompt: str = "",
    ) -> None:
        self.id = session_id
        self.model = model
        self.registry = registry or ToolRegistry()
        self.beamline = beamline
        self.memory = memory
        self.memory_k = memory_k
        self.approval_source = approval_source
        self.context = Context(session_id=session_id)
        if clock is not None:
            self.context.clock = clock
        if system_prompt:
            self.append(system_message(system_prompt))
        self.subtask_outcomes: list[LoopOutcome] = []
        self._spawn_count = 0
        self.on_event: Optional[Callable[[str, dict], None]] = None

    # -- context plumbing -----------------------------------------------------

    def emit(self, kind: str, payload: dict) -> None:
        if self.on_event is not None:
            self.on_event(kind, payload)

    def append(self, message: Message) -> Message:
        stored = self.context.append(message)
        from .context import message_to_json

        self.emit("message_appended", {"message": message_to_json(stored)})
        return stored

    def add_user_message(self, text: str, image_paths: Sequence[str] = ()) -> Message:
        """Append a user message, with memory recall/recording when enabled."""
        msg = user_message(text, image_paths)
        if self.memory is not None and text.strip():
            hits = self.memory.retrieve(text, k=self.memory_k)
            hits = [(rec, sim) for rec, sim in hits if sim > 0.0]
            if hits:
                self.append(auto_message(memory_context_text(hits)))
        stored = self.append(msg)
        if self.memory is not None and detect_notable(stored):
            self.memory.add_text(text, session_id=self.id, created_at=stored.timestamp)
        return stored


def _fire_hooks(
    session: Session, hooks: Sequence[Hook], trigger: str, call: Any, result: Optional[ToolResult]
) -> None:
    for hook in hooks:
        if hook.trigger != trigger:
            continue
        try:
            for msg in hook.action(session, call, result):
                session.append(msg)
        except Exception:
            logger.exception("hook %s failed; continuing without it", hook.trigger)


def run_loop(session: Session, config: LoopConfig) -> LoopOutcome:
    """Run the chat loop until termination, handoff, error, or the round cap."""
    if config.initial_prompt:
        session.add_user_message(config.initial_prompt)

    checker = (
        SequenceChecker(config.expected_sequence, config.sequence_start)
        if config.expected_sequence
        else None
    )
    consecutive_autoreplies = 0
    rounds = 0
    status = LoopStatus.ROUND_CAP
    session.emit("status_changed", {"status": "running"})

    while rounds < config.max_rounds:
        rounds += 1
        _fire_hooks(session, config.hooks, "before_model_call", None, None)
        try:
            response: ModelResponse = session.model.complete(
                session.context, session.registry.schemas()
            )
        except MalformedToolArguments as exc:
            session.append(auto_message(MALFORMED_ARGS_REPLY.format(detail=exc)))
            continue
        except GatewayError as exc:
            logger.error("model gateway failed: %s", exc)
            status = LoopStatus.ERROR
            break

        session.append(assistant_message(response.text, response.tool_calls))

        if response.tool_calls:
            consecutive_autoreplies = 0
            warnings: list[str] = []
            if checker is not None:
                for call in response.tool_calls:
                    w = checker.check(call.tool_name)
                    if w is not None:
                        warnings.append(w)
            results = session.registry.execute_calls(
                response.tool_calls,
                approval_source=session.approval_source,
                on_event=session.emit if session.on_event else None,
            )
            for call, result in zip(response.tool_calls, results):
                for msg in postprocess_result(result):
                    session.append(msg)
                _fire_hooks(session, config.hooks, f"after_tool:{call.tool_name}", call, result)
            for w in warnings:
                session.append(auto_message(w))
            continue

        token = find_termination_token(response.text, config.termination_tokens)
        if token is not None:
            status = (
                LoopStatus.HUMAN_HANDOFF if token == NEED_HUMAN_TOKEN else LoopStatus.TERMINATED
            )
            break
        if not config.require_signal_or_tool:
            status = LoopStatus.HUMAN_HANDOFF  # conversation handed back to the user
            break
        consecutive_autoreplies += 1
        session.append(auto_message(AUTO_REPLY_TEXT))
        if consecutive_autoreplies >= config.max_consecutive_autoreplies:
            status = LoopStatus.HUMAN_HANDOFF
            break

    session.emit("status_changed", {"status": status.value})
    return LoopOutcome(status=status, transcript=session.context, rounds=rounds)


# ---------------------------------------------------------------------------
# Structured queries and sub-agents
# ---------------------------------------------------------------------------


def ask_structured(
    session: Session, question: str, allowed: Sequence[str], default: str, retries: int = 1
) -> str:
    """Embedded model query demanding one of the allowed literal tokens.

    Re-asks up to *retries* times on a malformed reply, then returns *default*.
    """
    prompt = question
    for _ in range(retries + 1):
        session.append(auto_message(prompt))
        try:
            response = session.model.complete(session.context, session.registry.schemas())
        except GatewayError:
            return default
        session.append(assistant_message(response.text, response.tool_calls))
        matches = [
            tok
            for tok in allowed
            if re.search(rf"(?<![A-Za-z0-9]){re.escape(tok)}(?![A-Za-z0-9])", response.text.lower())
        ]
        if len(matches) == 1:
            return matches[0]
        prompt = f"Please answer with exactly one of: {', '.join(allowed)}."
    return default


def spawn_subtask(
    parent: Session,
    system_prompt: str,
    tools: ToolRegistry,
    goal: str,
    config: Optional[LoopConfig] = None,
) -> Message:
    """Run a nested session with its own context and tools.

    The child draws sequence numbers from the parent's allocator, so parent
    and child seq sets are disjoint.  Exactly one summary message is appended
    to the parent regardless of how long the child ran.
    """
    parent._spawn_count += 1
    child_id = f"{parent.id}/sub{parent._spawn_count}"
    child = Session(
        session_id=child_id,
        model=parent.model,
        registry=tools,
        beamline=parent.beamline,
        approval_source=parent.approval_source,
        clock=parent.context.clock,
    )
    child.context.seq_alloc = parent.context.seq_alloc
    if system_prompt:
        child.append(system_message(system_prompt))

    child_config = config or LoopConfig(max_rounds=16)
    outcome = run_loop(child, dataclass_replace(child_config, initial_prompt=goal))
    parent.subtask_outcomes.append(outcome)

    final_text = ""
    for msg in reversed(child.context.messages):
        if msg.role is Role.ASSISTANT and msg.text:
            final_text = msg.text
            break
    if outcome.status is LoopStatus.ERROR:
        summary = f"Sub-agent {child_id} failed with an error after {outcome.rounds} rounds."
    else:
        summary = (
            f"Sub-agent {child_id} finished (status={outcome.status.value}, "
            f"rounds={outcome.rounds}): {final_text}"
        )
    return parent.append(auto_message(summary))


# ---------------------------------------------------------------------------
# Registration hook (focusing workflow)
# ---------------------------------------------------------------------------

OFFSET_MESSAGE = (
    "Offset vs previous image: dx={dx:.3f}, dy={dy:.3f} (sample units). "
    "Apply this to your next line-scan coordinates."
)

FEATURE_TRACKING_SYSTEM_PROMPT = (
    "You are a feature-tracking assistant for a scanning microscope. Re-locate "
    "the reference feature by acquiring 2D images, moving and zooming the field "
    "of view until it matches the previous image. Report the spatial offset as "
    "'offset: dx=<value>, dy=<value>' and then say TERMINATE."
)

FEATURE_TRACKING_GOAL = (
    "The newest 2D image no longer overlaps the previous one. Track down the "
    "reference feature and report the offset between the two fields of view."
)


def make_registration_hook(confidence_threshold: float = 0.3) -> Hook:
    """After each 2D acquisition, register it against the previous one.

    High-confidence registration reports the drift directly; low confidence
    asks the agent whether the images overlap and, on "no", spawns the
    feature-tracking sub-task.
    """

    def action(session: Session, call: Any, result: Optional[ToolResult]) -> list[Message]:
        bl = session.beamline
        if bl is None or bl.previous_image is None or bl.last_image is None:
            return []
        prev, curr = bl.previous_image, bl.last_image
        if prev.data.shape != curr.data.shape:
            return []
        offset = phase_correlate(prev.data, curr.data, pixel_pitch=curr.step)
        if offset.confidence >= confidence_threshold:
            return [auto_message(OFFSET_MESSAGE.format(dx=offset.dx, dy=offset.dy))]
        answer = ask_structured(session, OVERLAP_QUESTION, ("yes", "no"), default="no")
        if answer == "yes":
            return [auto_message(OFFSET_MESSAGE.format(dx=offset.dx, dy=offset.dy))]
        spawn_subtask(
            session,
            FEATURE_TRACKING_SYSTEM_PROMPT,
            session.registry.subset([n for n in ("acquire_image_2d",) if n in session.registry.names()]),
            FEATURE_TRACKING_GOAL,
        )
        return []  # the sub-task summary is already in the parent context

    return Hook(trigger="after_tool:acquire_image_2d", action=action)
