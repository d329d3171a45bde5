"""Two-way MCP bridge over newline-delimited JSON-RPC 2.0 on stdio.

Serving: any tool registry snapshot becomes an MCP server answering
``initialize``, ``tools/list``, and ``tools/call`` (text blocks plus base64
image blocks), one request at a time.  Consuming: an external MCP server's
tools are wrapped as native tools; image blocks are decoded back to PNG files
on disk so the in-process file-path contract holds end to end.
"""

from __future__ import annotations

import base64
import json
import subprocess
import sys
from pathlib import Path
from typing import Any, IO, Optional

from .agent import Tool, ToolOutput, ToolParam, ToolRegistry, validate_arguments
from .context import ToolCall

PROTOCOL_VERSION = "2024-11-05"
SERVER_NAME = "eaa-tools"
SERVER_VERSION = "0.1.0"

PARSE_ERROR = -32700
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


class McpError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


class HandshakeFailure(Exception):
    pass


class RemoteToolError(Exception):
    """A proxied call failed on or en route to the remote server."""


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


class McpServer:
    """Serves one registry snapshot; requests are answered strictly in order."""

    def __init__(self, registry: ToolRegistry, name: str = SERVER_NAME,
                 approval_source=None) -> None:
        self.registry = registry
        self.name = name
        self.approval_source = approval_source
        self._call_counter = 0

    # -- request handling -----------------------------------------------------

    def handle_line(self, line: str) -> Optional[str]:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps(self._error(None, PARSE_ERROR, f"parse error: {exc}"))
        response = self.handle(request)
        return None if response is None else json.dumps(response)

    def handle(self, request: dict[str, Any]) -> Optional[dict[str, Any]]:
        req_id = request.get("id")
        method = request.get("method", "")
        params = request.get("params") or {}
        if method.startswith("notifications/"):
            return None
        try:
            if method == "initialize":
                result = self._initialize(params)
            elif method == "tools/list":
                result = self._tools_list()
            elif method == "tools/call":
                result = self._tools_call(params)
            else:
                return self._error(req_id, METHOD_NOT_FOUND, f"unknown method {method!r}")
        except McpError as exc:
            return self._error(req_id, exc.code, str(exc))
        return {"jsonrpc": "2.0", "id": req_id, "result": result}

    @staticmethod
    def _error(req_id, code: int, message: str) -> dict[str, Any]:
        return {"jsonrpc": "2.0", "id": req_id, "error": {"code": code, "message": message}}

    def _initialize(self, params: dict[str, Any]) -> dict[str, Any]:
        # negotiate loosely: accept whatever revision the client proposes
        version = params.get("protocolVersion") or PROTOCOL_VERSION
        return {
            "protocolVersion": version,
            "capabilities": {"tools": {}},
            "serverInfo": {"name": self.name, "version": SERVER_VERSION},
        }

    def _tools_list(self) -> dict[str, Any]:
        tools = []
        for schema in self.registry.schemas():
            tools.append(
                {
                    "name": schema.name,
                    "description": schema.description,
                    "inputSchema": schema.parameters,
                }
            )
        return {"tools": tools}

    def _tools_call(self, params: dict[str, Any]) -> dict[str, Any]:
        name = params.get("name")
        arguments = params.get("arguments") or {}
        if not isinstance(name, str) or name not in self.registry.names():
            raise McpError(INVALID_PARAMS, f"unknown tool {name!r}")
        if not isinstance(arguments, dict):
            raise McpError(INVALID_PARAMS, "arguments must be an object")
        tool = self.registry.get(name)
        problem = validate_arguments(tool, self.registry.policy(name), arguments)
        if problem is not None:
            raise McpError(INVALID_PARAMS, problem)

        self._call_counter += 1
        call = ToolCall(
            id=f"mcp_{self._call_counter:04d}",
            tool_name=name,
            arguments_json=json.dumps(arguments),
        )
        result = self.registry.execute_calls([call], approval_source=self.approval_source)[0]
        if result.is_error:
            raise McpError(INTERNAL_ERROR, result.text)
        content: list[dict[str, Any]] = [{"type": "text", "text": result.text}]
        for path in result.image_paths:
            data = Path(path).read_bytes()
            content.append(
                {
                    "type": "image",
                    "data": base64.b64encode(data).decode("ascii"),
                    "mimeType": "image/png",
                }
            )
        return {"content": content, "isError": False}

    # -- transport ------------------------------------------------------------

    def serve(self, instream: IO[str] | None = None, outstream: IO[str] | None = None) -> None:
        """Blocking line loop; returns at EOF."""
        instream = instream or sys.stdin
        outstream = outstream or sys.stdout
        for line in instream:
            if not line.strip():
                continue
            reply = self.handle_line(line)
            if reply is not None:
                outstream.write(reply + "\n")
                outstream.flush()


def serve(registry: ToolRegistry, instream: IO[str] | None = None,
          outstream: IO[str] | None = None, approval_source=None) -> None:
    McpServer(registry, approval_source=approval_source).serve(instream, outstream)


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


class McpClient:
    """One connection to an external MCP server (subprocess over stdio)."""

    def __init__(self, command: list[str], out_dir: str | Path = "eaa_out/mcp") -> None:
        self.command = list(command)
        self.out_dir = Path(out_dir)
        self.process: Optional[subprocess.Popen] = None
        self._next_id = 0
        self._image_counter = 0
        self.protocol_version: str | None = None

    def start(self) -> None:
        self.process = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        try:
            result = self.request(
                "initialize",
                {
                    "protocolVersion": PROTOCOL_VERSION,
                    "clientInfo": {"name": "eaa", "version": SERVER_VERSION},
                    "capabilities": {},
                },
            )
        except (McpError, RemoteToolError) as exc:
            self.close()
            raise HandshakeFailure(f"initialize failed: {exc}") from exc
        if "protocolVersion" not in result:
            self.close()
            raise HandshakeFailure("server did not report a protocol version")
        self.protocol_version = result["protocolVersion"]
        self.notify("notifications/initialized", {})

    def request(self, method: str, params: dict[str, Any]) -> dict[str, Any]:
        assert self.process is not None and self.process.stdin and self.process.stdout
        self._next_id += 1
        req_id = self._next_id
        payload = {"jsonrpc": "2.0", "id": req_id, "method": method, "params": params}
        try:
            self.process.stdin.write(json.dumps(payload) + "\n")
            self.process.stdin.flush()
            line = self.process.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise RemoteToolError(f"remote server connection lost: {exc}") from exc
        if not line:
            raise RemoteToolError("remote server closed the connection")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RemoteToolError(f"remote sent a non-JSON reply: {line[:80]!r}") from exc
        if response.get("id") != req_id:
            raise RemoteToolError(f"out-of-order response id {response.get('id')!r}")
        if "error" in response:
            err = response["error"]
            raise McpError(err.get("code", INTERNAL_ERROR), err.get("message", "remote error"))
        return response.get("result", {})

    def notify(self, method: str, params: dict[str, Any]) -> None:
        assert self.process is not None and self.process.stdin
        payload = {"jsonrpc": "2.0", "method": method, "params": params}
        self.process.stdin.write(json.dumps(payload) + "\n")
        self.process.stdin.flush()

    def list_tools(self) -> list[dict[str, Any]]:
        return self.request("tools/list", {}).get("tools", [])

    def call_tool(self, name: str, arguments: dict[str, Any]) -> ToolOutput:
        try:
            result = self.request("tools/call", {"name": name, "arguments": arguments})
        except McpError as exc:
            raise RemoteToolError(str(exc)) from exc
        text_parts: list[str] = []
        image_paths: list[str] = []
        for block in result.get("content", []):
            if block.get("type") == "text":
                text_parts.append(block.get("text", ""))
            elif block.get("type") == "image":
                self._image_counter += 1
                self.out_dir.mkdir(parents=True, exist_ok=True)
                path = self.out_dir / f"mcp_{self._image_counter:04d}.png"
                path.write_bytes(base64.b64decode(block.get("data", "")))
                image_paths.append(str(path))
        if result.get("isError"):
            raise RemoteToolError("\n".join(text_parts) or "remote tool reported an error")
        return ToolOutput(text="\n".join(text_parts), image_paths=tuple(image_paths))

    def close(self) -> None:
        if self.process is not None:
            if self.process.stdin:
                try:
                    self.process.stdin.close()
                except OSError:
                    pass
            self.process.terminate()
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()
            self.process = None


_JSON_TYPE_TO_PARAM = {"number", "integer", "string", "boolean"}


class McpRemoteTool(Tool):
    """A remote MCP tool exposed as a native tool (calls proxied 1:1)."""

    def __init__(self, client: McpClient, name: str, description: str,
                 input_schema: dict[str, Any]) -> None:
        self.client = client
        self.name = name
        self.description = description
        self._input_schema = input_schema
        self.produces_images = True  # unknown a priori; images flow through if present
        params = []
        required = set(input_schema.get("required", []))
        for pname, prop in (input_schema.get("properties") or {}).items():
            ptype = prop.get("type", "string")
            params.append(
                ToolParam(
                    name=pname,
                    type=ptype if ptype in _JSON_TYPE_TO_PARAM else "string",
                    description=prop.get("description", ""),
                    required=pname in required,
                    minimum=prop.get("minimum"),
                    maximum=prop.get("maximum"),
                )
            )
        self.params = tuple(params)

    def parameters_schema(self) -> dict[str, Any]:
        # return the remote schema verbatim so schema fidelity is byte-exact
        return self._input_schema

    def call(self, **kwargs) -> ToolOutput:
        return self.client.call_tool(self.name, kwargs)


def connect(
    command: list[str],
    out_dir: str | Path = "eaa_out/mcp",
    registry: Optional[ToolRegistry] = None,
) -> tuple[McpClient, list[McpRemoteTool]]:
    """Spawn and handshake an external MCP server; wrap its tools as native tools.

    When *registry* is given, every remote tool is registered into it.
    """
    client = McpClient(command, out_dir=out_dir)
    client.start()
    tools = [
        McpRemoteTool(
            client,
            name=t["name"],
            description=t.get("description", ""),
            input_schema=t.get("inputSchema", {"type": "object", "properties": {}, "required": []}),
        )
        for t in client.list_tools()
    ]
    if registry is not None:
        for tool in tools:
            registry.register(tool)
    return client, tools
