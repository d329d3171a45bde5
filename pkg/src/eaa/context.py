"""Multimodal conversation record and its OpenAI-compatible wire rendering.

A :class:`Context` is an ordered, append-only transcript of messages from the
user, the assistant, tools, and the workflow ("auto" messages, which act as
user proxies on the wire).  Images are never embedded in the context itself;
messages reference PNG/JPEG files on disk and the wire renderer inlines them
as base64 only at request time.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable


class Role(str, Enum):
    """Conversation role. AUTO marks workflow-generated user-proxy messages."""

    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"
    SYSTEM = "system"
    AUTO = "auto"


class ContextError(Exception):
    """Base class for transcript integrity errors."""


class RoleFieldMismatch(ContextError):
    """Message fields are inconsistent with its role."""


class DanglingToolResult(ContextError):
    """A tool message's call_id matches no pending tool call."""


class MissingImageFile(ContextError):
    """An image referenced by the context is unreadable at render time."""


class CorruptTranscript(ContextError):
    """A persisted transcript could not be parsed back into a Context."""


AUX_IMAGE_CAPTION = "Image(s) produced by tool call {call_id}"

_MEDIA_TYPES = {"png": "image/png", "jpeg": "image/jpeg"}


@dataclass(frozen=True)
class ContentPart:
    """One piece of message content: either text or a reference to an image file."""

    kind: str  # "text" | "image_ref"
    text: str = ""
    path: str = ""
    media_type: str = "png"
    origin: str = "user_paste"  # tool | user_paste | workflow

    def __post_init__(self) -> None:
        if self.kind not in ("text", "image_ref"):
            raise ValueError(f"unknown content part kind: {self.kind!r}")
        if self.kind == "image_ref" and self.media_type not in _MEDIA_TYPES:
            raise ValueError(f"unsupported media type: {self.media_type!r}")


def text_part(text: str) -> ContentPart:
    return ContentPart(kind="text", text=text)


def image_part(path: str, media_type: str = "png", origin: str = "user_paste") -> ContentPart:
    return ContentPart(kind="image_ref", path=str(path), media_type=media_type, origin=origin)


@dataclass(frozen=True)
class ToolCall:
    """A structured call emitted by the model: name plus raw JSON argument text."""

    id: str
    tool_name: str
    arguments_json: str

    def arguments(self) -> dict[str, Any]:
        """Parse arguments_json, requiring a JSON object."""
        parsed = json.loads(self.arguments_json)
        if not isinstance(parsed, dict):
            raise ValueError("tool call arguments must be a JSON object")
        return parsed


@dataclass(frozen=True)
class ToolResult:
    """Outcome of executing one tool call.

    ``denied`` implies the tool body never executed; such results are always
    errors as well so the model treats them as failed actions.
    """

    call_id: str
    text: str
    image_paths: tuple[str, ...] = ()
    is_error: bool = False
    denied: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "image_paths", tuple(str(p) for p in self.image_paths))


@dataclass(frozen=True)
class Message:
    """One transcript entry. ``seq`` is assigned by the owning Context on append."""

    role: Role
    parts: tuple[ContentPart, ...] = ()
    tool_calls: tuple[ToolCall, ...] = ()
    tool_result: ToolResult | None = None
    timestamp: datetime | None = None
    seq: int = -1

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))

    @property
    def text(self) -> str:
        """Concatenated text of all text parts."""
        return "".join(p.text for p in self.parts if p.kind == "text")

    def image_refs(self) -> tuple[ContentPart, ...]:
        return tuple(p for p in self.parts if p.kind == "image_ref")


def user_message(text: str, image_paths: Iterable[str] = (), origin: str = "user_paste") -> Message:
    parts = [text_part(text)] if text else []
    parts += [image_part(p, origin=origin) for p in image_paths]
    return Message(role=Role.USER, parts=tuple(parts))


def system_message(text: str) -> Message:
    return Message(role=Role.SYSTEM, parts=(text_part(text),))


def auto_message(text: str, image_paths: Iterable[str] = ()) -> Message:
    parts = [text_part(text)] if text else []
    parts += [image_part(p, origin="workflow") for p in image_paths]
    return Message(role=Role.AUTO, parts=tuple(parts))


def assistant_message(text: str, tool_calls: Iterable[ToolCall] = ()) -> Message:
    parts = (text_part(text),) if text else ()
    return Message(role=Role.ASSISTANT, parts=parts, tool_calls=tuple(tool_calls))


def tool_message(result: ToolResult) -> Message:
    return Message(role=Role.TOOL, tool_result=result)


def aux_image_message(result: ToolResult) -> Message:
    """Auxiliary user-proxy message carrying a tool result's images.

    The caption names the originating call so the model can bind the pixels to
    the action that produced them.
    """
    parts = [text_part(AUX_IMAGE_CAPTION.format(call_id=result.call_id))]
    parts += [image_part(p, origin="tool") for p in result.image_paths]
    return Message(role=Role.AUTO, parts=tuple(parts))


class SeqAllocator:
    """Monotone sequence-number source, shareable between nested contexts."""

    def __init__(self, start: int = 0) -> None:
        self._next = start

    def next(self) -> int:
        value = self._next
        self._next += 1
        return value

    def advance_past(self, seq: int) -> None:
        if seq >= self._next:
            self._next = seq + 1


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class TickClock:
    """Deterministic clock: starts at a fixed instant, advances a fixed step per call."""

    def __init__(self, start: datetime | None = None, step_ms: float = 1.0) -> None:
        self._t = start or datetime(2000, 1, 1, tzinfo=timezone.utc)
        self._step_us = int(step_ms * 1000)

    def __call__(self) -> datetime:
        t = self._t
        from datetime import timedelta

        self._t = t + timedelta(microseconds=self._step_us)
        return t


@dataclass
class Context:
    """Ordered conversation record owned by exactly one session."""

    session_id: str
    messages: list[Message] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)
    seq_alloc: SeqAllocator = field(default_factory=SeqAllocator, compare=False, repr=False)
    clock: Callable[[], datetime] = field(default=utc_now, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, message: Message) -> Message:
        """Validate and append, assigning the next sequence number.

        Returns the stored message (with seq and timestamp filled in).
        Raises RoleFieldMismatch or DanglingToolResult on invariant violations.
        """
        self._validate(message)
        stamped = replace(
            message,
            seq=self.seq_alloc.next(),
            timestamp=message.timestamp or self.clock(),
        )
        self.messages.append(stamped)
        return stamped

    def _validate(self, message: Message) -> None:
        if message.tool_calls and message.role is not Role.ASSISTANT:
            raise RoleFieldMismatch("tool_calls are only allowed on assistant messages")
        if (message.tool_result is not None) != (message.role is Role.TOOL):
            raise RoleFieldMismatch("tool_result must be present iff role is tool")
        if message.role is Role.ASSISTANT:
            seen = self._all_call_ids()
            for call in message.tool_calls:
                if call.id in seen:
                    raise RoleFieldMismatch(f"duplicate tool call id {call.id!r}")
                seen.add(call.id)
                try:
                    call.arguments()
                except (json.JSONDecodeError, ValueError) as exc:
                    raise RoleFieldMismatch(f"tool call {call.id!r}: {exc}") from exc
        if message.role is Role.TOOL:
            assert message.tool_result is not None
            pending = self._nearest_pending()
            if pending is None or message.tool_result.call_id not in pending:
                raise DanglingToolResult(
                    f"no pending tool call with id {message.tool_result.call_id!r}"
                )

    def _all_call_ids(self) -> set[str]:
        return {c.id for m in self.messages for c in m.tool_calls}

    def _nearest_pending(self) -> set[str] | None:
        """Unresolved call ids of the nearest preceding assistant message with any."""
        resolved: set[str] = set()
        for m in reversed(self.messages):
            if m.role is Role.TOOL and m.tool_result is not None:
                resolved.add(m.tool_result.call_id)
            elif m.tool_calls:
                unresolved = {c.id for c in m.tool_calls} - resolved
                if unresolved:
                    return unresolved
        return None

    def pending_call_ids(self) -> set[str]:
        return self._nearest_pending() or set()


def append_message(context: Context, message: Message) -> Context:
    """Functional spelling of :meth:`Context.append`."""
    context.append(message)
    return context


# ---------------------------------------------------------------------------
# Wire rendering (OpenAI chat-completions message list)
# ---------------------------------------------------------------------------


def _encode_image(path: str) -> tuple[str, str]:
    """Return (base64 data, media type) for an image file, or raise MissingImageFile."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise MissingImageFile(f"cannot read image {path!r}: {exc}") from exc
    suffix = p.suffix.lower().lstrip(".")
    media = _MEDIA_TYPES.get("jpeg" if suffix in ("jpg", "jpeg") else "png")
    return base64.b64encode(data).decode("ascii"), media or "image/png"


def _image_block(part: ContentPart) -> dict[str, Any]:
    b64, media = _encode_image(part.path)
    return {"type": "image_url", "image_url": {"url": f"data:{media};base64,{b64}"}}


def _content_blocks(message: Message) -> str | list[dict[str, Any]]:
    """Plain string when text-only, otherwise a block list with inline images."""
    if not message.image_refs():
        return message.text
    blocks: list[dict[str, Any]] = []
    for part in message.parts:
        if part.kind == "text":
            blocks.append({"type": "text", "text": part.text})
        else:
            blocks.append(_image_block(part))
    return blocks


def _is_aux_for(message: Message | None, result: ToolResult) -> bool:
    """True if *message* is the auxiliary image message for *result*."""
    if message is None or message.role not in (Role.AUTO, Role.USER):
        return False
    refs = message.image_refs()
    if not refs or any(p.origin != "tool" for p in refs):
        return False
    if tuple(p.path for p in refs) != result.image_paths:
        return False
    return result.call_id in message.text


def render_for_wire(context: Context) -> list[dict[str, Any]]:
    """Render the context as an OpenAI-compatible message list.

    Every tool result carrying N >= 1 images is followed on the wire by exactly
    one user message with N base64 image blocks.  If the context already holds
    the auxiliary image message (the normal post-processing path), it renders
    in place; otherwise a synthetic one is injected here.
    """
    wire: list[dict[str, Any]] = []
    msgs = context.messages
    for idx, m in enumerate(msgs):
        if m.role is Role.TOOL:
            result = m.tool_result
            assert result is not None
            wire.append(
                {"role": "tool", "tool_call_id": result.call_id, "content": result.text}
            )
            if result.image_paths:
                nxt = msgs[idx + 1] if idx + 1 < len(msgs) else None
                if not _is_aux_for(nxt, result):
                    wire.append(
                        {
                            "role": "user",
                            "content": _content_blocks(aux_image_message(result)),
                        }
                    )
        elif m.role is Role.ASSISTANT:
            entry: dict[str, Any] = {"role": "assistant", "content": m.text}
            if m.tool_calls:
                entry["tool_calls"] = [
                    {
                        "id": c.id,
                        "type": "function",
                        "function": {"name": c.tool_name, "arguments": c.arguments_json},
                    }
                    for c in m.tool_calls
                ]
            wire.append(entry)
        else:
            role = "user" if m.role in (Role.USER, Role.AUTO) else m.role.value
            wire.append({"role": role, "content": _content_blocks(m)})
    return wire


# ---------------------------------------------------------------------------
# Transcript persistence (JSONL)
# ---------------------------------------------------------------------------


def _part_to_json(p: ContentPart) -> dict[str, Any]:
    if p.kind == "text":
        return {"kind": "text", "text": p.text}
    return {"kind": "image_ref", "path": p.path, "media_type": p.media_type, "origin": p.origin}


def _part_from_json(d: dict[str, Any]) -> ContentPart:
    if d["kind"] == "text":
        return text_part(d["text"])
    return ContentPart(
        kind="image_ref", path=d["path"], media_type=d["media_type"], origin=d["origin"]
    )


def message_to_json(m: Message) -> dict[str, Any]:
    out: dict[str, Any] = {
        "seq": m.seq,
        "role": m.role.value,
        "parts": [_part_to_json(p) for p in m.parts],
        "tool_calls": [
            {"id": c.id, "tool_name": c.tool_name, "arguments_json": c.arguments_json}
            for c in m.tool_calls
        ],
        "tool_result": None,
        "timestamp": m.timestamp.isoformat() if m.timestamp else None,
    }
    if m.tool_result is not None:
        r = m.tool_result
        out["tool_result"] = {
            "call_id": r.call_id,
            "text": r.text,
            "image_paths": list(r.image_paths),
            "is_error": r.is_error,
            "denied": r.denied,
        }
    return out


def message_from_json(d: dict[str, Any]) -> Message:
    result = None
    if d.get("tool_result") is not None:
        r = d["tool_result"]
        result = ToolResult(
            call_id=r["call_id"],
            text=r["text"],
            image_paths=tuple(r["image_paths"]),
            is_error=r["is_error"],
            denied=r["denied"],
        )
    ts = datetime.fromisoformat(d["timestamp"]) if d.get("timestamp") else None
    return Message(
        role=Role(d["role"]),
        parts=tuple(_part_from_json(p) for p in d["parts"]),
        tool_calls=tuple(
            ToolCall(id=c["id"], tool_name=c["tool_name"], arguments_json=c["arguments_json"])
            for c in d["tool_calls"]
        ),
        tool_result=result,
        timestamp=ts,
        seq=d["seq"],
    )


def persist_transcript(context: Context, path: str | Path) -> None:
    """Write the context as JSONL: a header line, then one message per line."""
    lines = [json.dumps({"session_id": context.session_id, "metadata": context.metadata})]
    lines += [json.dumps(message_to_json(m)) for m in context.messages]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_transcript(path: str | Path) -> Context:
    """Load a transcript written by :func:`persist_transcript`."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorruptTranscript(str(exc)) from exc
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if not lines:
        raise CorruptTranscript("empty transcript")
    try:
        header = json.loads(lines[0])
        messages = [message_from_json(json.loads(ln)) for ln in lines[1:]]
        session_id = header["session_id"]
        metadata = dict(header["metadata"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptTranscript(f"malformed transcript line: {exc}") from exc
    ctx = Context(session_id=session_id, metadata=metadata)
    ctx.messages = messages
    for m in messages:
        ctx.seq_alloc.advance_past(m.seq)
    return ctx
