"""Chat-completions gateway plus a deterministic scripted model for tests.

Any endpoint speaking the OpenAI chat-completions JSON dialect works; the
scripted model replays canned responses (optionally asserting expectations
against the rendered wire input) so workflows run with no network at all.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

import requests

from .context import Context, ToolCall, render_for_wire


class GatewayError(Exception):
    pass


class EndpointUnreachable(GatewayError):
    pass


class HttpStatus(GatewayError):
    def __init__(self, code: int, detail: str = "") -> None:
        super().__init__(f"HTTP {code}: {detail}" if detail else f"HTTP {code}")
        self.code = code


class MalformedToolArguments(GatewayError):
    """The model produced tool arguments that are not a JSON object."""


class ScriptExhausted(GatewayError):
    pass


class ScriptExpectationFailed(GatewayError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    base_url: str
    model_name: str
    api_key: str = ""
    temperature: float = 1.0
    reasoning_effort: str | None = None
    timeout: float = 120.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    tool_calls: tuple[ToolCall, ...] = ()
    usage: dict[str, int] | None = None
    latency: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))


class Model(Protocol):
    """Anything the chat loop can talk to."""

    def complete(self, context: Context, schemas: Sequence[Any]) -> ModelResponse: ...


def parse_wire_response(body: dict[str, Any]) -> tuple[str, list[ToolCall], dict | None]:
    """Extract text, tool calls, and usage from a chat-completions response body."""
    try:
        message = body["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise GatewayError(f"unexpected response shape: {exc}") from exc
    text = message.get("content") or ""
    calls: list[ToolCall] = []
    for tc in message.get("tool_calls") or []:
        fn = tc.get("function", {})
        args = fn.get("arguments", "")
        try:
            parsed = json.loads(args)
        except json.JSONDecodeError as exc:
            raise MalformedToolArguments(
                f"tool call {fn.get('name', '?')!r}: arguments are not valid JSON: {exc}"
            ) from exc
        if not isinstance(parsed, dict):
            raise MalformedToolArguments(
                f"tool call {fn.get('name', '?')!r}: arguments must be a JSON object"
            )
        calls.append(
            ToolCall(id=tc.get("id", f"call_{len(calls)}"), tool_name=fn.get("name", ""),
                     arguments_json=args)
        )
    return text, calls, body.get("usage")


class OpenAIModel:
    """Blocking client for one OpenAI-compatible chat-completions endpoint."""

    def __init__(self, config: ModelConfig) -> None:
        self.config = config

    def complete(self, context: Context, schemas: Sequence[Any]) -> ModelResponse:
        payload: dict[str, Any] = {
            "model": self.config.model_name,
            "messages": render_for_wire(context),
            "temperature": self.config.temperature,
        }
        if schemas:
            payload["tools"] = [s.as_openai() for s in schemas]
        if self.config.reasoning_effort:
            payload["reasoning_effort"] = self.config.reasoning_effort
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        url = self.config.base_url.rstrip("/") + "/chat/completions"

        started = time.monotonic()
        response = None
        last_exc: Exception | None = None
        for _ in range(2):  # one automatic retry on transport errors only
            try:
                response = requests.post(
                    url, json=payload, headers=headers, timeout=self.config.timeout
                )
                break
            except requests.RequestException as exc:
                last_exc = exc
        if response is None:
            raise EndpointUnreachable(f"cannot reach {url}: {last_exc}")
        latency = time.monotonic() - started
        if response.status_code >= 400:
            raise HttpStatus(response.status_code, response.text[:500])
        text, calls, usage = parse_wire_response(response.json())
        return ModelResponse(text=text, tool_calls=tuple(calls), usage=usage, latency=latency)


# ---------------------------------------------------------------------------
# Scripted model
# ---------------------------------------------------------------------------


@dataclass
class ScriptEntry:
    """One canned response, optionally gated on the rendered wire input."""

    response: ModelResponse
    expect: Callable[[list[dict[str, Any]]], bool] | None = None
    expect_contains: str | None = None


class ScriptedModel:
    """Replays responses strictly in order; running past the end is an error."""

    def __init__(self, entries: Sequence["ScriptEntry | ModelResponse | tuple"]) -> None:
        if not entries:
            raise ValueError("script must be nonempty")
        self.entries = [_as_entry(e) for e in entries]
        self.cursor = 0

    def complete(self, context: Context, schemas: Sequence[Any]) -> ModelResponse:
        if self.cursor >= len(self.entries):
            raise ScriptExhausted(
                f"script exhausted after {len(self.entries)} responses"
            )
        entry = self.entries[self.cursor]
        self.cursor += 1
        started = time.monotonic()
        wire = render_for_wire(context)
        if entry.expect is not None and not entry.expect(wire):
            raise ScriptExpectationFailed(f"expectation failed at entry {self.cursor - 1}")
        if entry.expect_contains is not None and entry.expect_contains not in json.dumps(wire):
            raise ScriptExpectationFailed(
                f"entry {self.cursor - 1}: wire input does not contain "
                f"{entry.expect_contains!r}"
            )
        return ModelResponse(
            text=entry.response.text,
            tool_calls=entry.response.tool_calls,
            usage=entry.response.usage,
            latency=time.monotonic() - started,
        )


def _as_entry(item: "ScriptEntry | ModelResponse | tuple") -> ScriptEntry:
    if isinstance(item, ScriptEntry):
        return item
    if isinstance(item, ModelResponse):
        return ScriptEntry(response=item)
    predicate, response = item
    return ScriptEntry(response=response, expect=predicate)


def make_scripted_model(script: Sequence[ScriptEntry | ModelResponse | tuple]) -> ScriptedModel:
    """Build a ScriptedModel from entries, bare responses, or (predicate, response) pairs."""
    return ScriptedModel([_as_entry(item) for item in script])


def script_entry_to_json(entry: ScriptEntry) -> dict[str, Any]:
    out: dict[str, Any] = {
        "text": entry.response.text,
        "tool_calls": [
            {"id": c.id, "name": c.tool_name, "arguments": json.loads(c.arguments_json)}
            for c in entry.response.tool_calls
        ],
    }
    if entry.expect_contains is not None:
        out["expect_contains"] = entry.expect_contains
    return out


def script_from_json(data: dict[str, Any] | list) -> list[ScriptEntry]:
    """Parse the JSON script format: {"entries": [{"text", "tool_calls", ...}]}."""
    raw_entries = data["entries"] if isinstance(data, dict) else data
    entries: list[ScriptEntry] = []
    counter = 0
    for raw in raw_entries:
        calls = []
        for tc in raw.get("tool_calls", []):
            counter += 1
            calls.append(
                ToolCall(
                    id=tc.get("id") or f"call_{counter:04d}",
                    tool_name=tc["name"],
                    arguments_json=json.dumps(tc["arguments"]),
                )
            )
        entries.append(
            ScriptEntry(
                response=ModelResponse(text=raw.get("text", ""), tool_calls=tuple(calls)),
                expect_contains=raw.get("expect_contains"),
            )
        )
    return entries


def save_script(entries: Sequence[ScriptEntry], path: str | Path) -> None:
    payload = {"entries": [script_entry_to_json(e) for e in entries]}
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")


def load_script_file(path: str | Path) -> ScriptedModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ScriptedModel(script_from_json(data))
