"""Command-line frontend: interactive chat, headless workflows, servers, benchmarks."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .agent import ToolRegistry
from .beamline import VirtualBeamline
from .config import AppConfig, ConfigError, load_app_config, load_scenario, resolve_model
from .context import Role, TickClock, ToolCall
from .engine import LoopConfig, LoopStatus, Session, run_loop
from .memory import MemoryStore
from .tools import DummyAcquire, microscope_tools
from .workflows import FeatureSearchParams, FocusingParams, run_feature_search, run_focusing


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load(config_path: str | None) -> AppConfig:
    try:
        return load_app_config(config_path)
    except ConfigError as exc:
        _fail(str(exc))
        raise  # unreachable


def _model(spec: str | None, config: AppConfig):
    try:
        return resolve_model(spec, config)
    except ConfigError as exc:
        _fail(str(exc))
        raise


def _session(config: AppConfig, model, scenario_path: str | None, session_id: str,
             deterministic: bool = False, memory: bool | None = None) -> Session:
    scenario = load_scenario(scenario_path or config.scenario_path)
    beamline = VirtualBeamline(scenario, out_dir=config.out_dir, session=session_id)
    registry = ToolRegistry()
    for tool in microscope_tools(beamline):
        registry.register(tool)
    store = None
    use_memory = config.memory.enabled if memory is None else memory
    if use_memory:
        store = MemoryStore(
            path=config.memory.path or Path(config.out_dir) / "memory.jsonl",
            dimension=config.memory.dimension,
        )
    return Session(
        session_id=session_id,
        model=model,
        registry=registry,
        beamline=beamline,
        memory=store,
        memory_k=config.memory.k,
        clock=TickClock() if deterministic else None,
    )


def _write_report(report: dict, out: str) -> None:
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(f"report written to {out}")


@click.group()
def main() -> None:
    """Agentic runtime for scanning-microscopy experiments (virtual beamline)."""


@main.command()
@click.option("--config", "config_path", default=None, help="TOML/JSON config file")
@click.option("--model", "model_spec", default=None, help="model name or scripted:<file>")
@click.option("--scenario", default=None, help="scenario file (TOML/JSON)")
@click.option("--memory/--no-memory", "memory_flag", default=None)
@click.option(
    "--mcp-connect",
    "mcp_commands",
    multiple=True,
    help="spawn an external MCP server (command line) and attach its tools",
)
def chat(config_path, model_spec, scenario, memory_flag, mcp_commands) -> None:
    """Interactive terminal chat with the instrument tools."""
    import shlex

    from .mcp import HandshakeFailure, connect as mcp_connect

    config = _load(config_path)
    model = _model(model_spec, config)
    session = _session(config, model, scenario, "chat", memory=memory_flag)

    clients = []
    for command in mcp_commands:
        try:
            client, tools = mcp_connect(
                shlex.split(command),
                out_dir=Path(config.out_dir) / "mcp",
                registry=session.registry,
            )
        except HandshakeFailure as exc:
            _fail(f"MCP connect failed for {command!r}: {exc}")
        clients.append(client)
        names = ", ".join(t.name for t in tools) or "(no tools)"
        click.echo(f"attached MCP server: {names}")

    def approve(call: ToolCall) -> bool:
        click.echo(f"approval required: {call.tool_name}({call.arguments_json})")
        return click.confirm("approve?", default=False)

    session.approval_source = approve
    click.echo("chat started; empty line or Ctrl-D exits")
    try:
        while True:
            try:
                line = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
            except (EOFError, click.Abort):
                break
            if not line.strip():
                break
            before = len(session.context)
            session.add_user_message(line)
            run_loop(session, LoopConfig(require_signal_or_tool=False, max_rounds=16))
            for msg in session.context.messages[before:]:
                if msg.role is Role.ASSISTANT and msg.text:
                    click.echo(f"agent> {msg.text}")
                elif msg.role is Role.TOOL and msg.tool_result is not None:
                    marker = "error" if msg.tool_result.is_error else "ok"
                    click.echo(f"tool [{marker}]> {msg.tool_result.text.splitlines()[0]}")
    finally:
        for client in clients:
            client.close()


@main.command("run-focusing")
@click.option("--config", "config_path", default=None)
@click.option("--model", "model_spec", default=None)
@click.option("--scenario", default=None)
@click.option("--out", default="report_focusing.json", show_default=True)
@click.option("--params", "params_path", default=None, help="JSON file with workflow params")
@click.option("--deterministic", is_flag=True, help="fixed clock for reproducible transcripts")
def run_focusing_cmd(config_path, model_spec, scenario, out, params_path, deterministic) -> None:
    """Run the automated focusing workflow headless and write a JSON report."""
    config = _load(config_path)
    model = _model(model_spec, config)
    params = FocusingParams(**json.loads(Path(params_path).read_text())) if params_path else FocusingParams()
    session = _session(config, model, scenario, "focusing", deterministic=deterministic)
    report = run_focusing(session, params)
    _write_report(report, out)
    if report["status"] == LoopStatus.ERROR.value:
        sys.exit(2)


@main.command("run-feature-search")
@click.option("--config", "config_path", default=None)
@click.option("--model", "model_spec", default=None)
@click.option("--scenario", default=None)
@click.option("--out", default="report_feature_search.json", show_default=True)
@click.option("--params", "params_path", default=None)
@click.option("--deterministic", is_flag=True)
def run_feature_search_cmd(config_path, model_spec, scenario, out, params_path, deterministic) -> None:
    """Run the natural-language feature search headless and write a JSON report."""
    config = _load(config_path)
    model = _model(model_spec, config)
    params = (
        FeatureSearchParams(**json.loads(Path(params_path).read_text()))
        if params_path
        else FeatureSearchParams()
    )
    session = _session(config, model, scenario, "feature-search", deterministic=deterministic)
    report = run_feature_search(session, params)
    _write_report(report, out)
    if report["status"] == LoopStatus.ERROR.value:
        sys.exit(2)


@main.command()
@click.option("--config", "config_path", default=None)
@click.option("--model", "model_spec", default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(config_path, model_spec, host, port) -> None:
    """Start the HTTP session service (used by the web UI)."""
    import uvicorn

    from .service import create_app

    config = _load(config_path)
    model = _model(model_spec, config) if model_spec else None
    if model is None:
        try:
            model = resolve_model(None, config)
        except ConfigError as exc:
            _fail(str(exc))
    uvicorn.run(create_app(config, model=model), host=host, port=port)


@main.command("serve-mcp")
@click.option("--config", "config_path", default=None)
@click.option("--scenario", default=None)
@click.option("--tools", "tool_names", default="", help="comma-separated subset of tool names")
@click.option("--with-dummy", is_flag=True, help="also expose the dummy acquirer")
def serve_mcp(config_path, scenario, tool_names, with_dummy) -> None:
    """Serve the instrument tools as an MCP server on stdio (JSON-RPC 2.0)."""
    from .mcp import serve as mcp_serve

    config = _load(config_path)
    beamline = VirtualBeamline(
        load_scenario(scenario or config.scenario_path), out_dir=config.out_dir, session="mcp"
    )
    registry = ToolRegistry()
    for tool in microscope_tools(beamline):
        registry.register(tool)
    if with_dummy:
        registry.register(DummyAcquire(out_dir=Path(config.out_dir) / "dummy"))
    if tool_names:
        registry = registry.subset([n.strip() for n in tool_names.split(",") if n.strip()])
    mcp_serve(registry)


@main.command()
@click.argument("task", type=click.Choice(["grid", "marker"]))
@click.option("--config", "config_path", default=None)
@click.option("--model", "model_spec", default=None)
@click.option("--trials", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, help="write the report JSON here")
def benchmark(task, config_path, model_spec, trials, seed, out) -> None:
    """Run a model benchmark and print/write the report."""
    from .benchmark import run_grid_benchmark, run_marker_benchmark

    config = _load(config_path)
    model = _model(model_spec, config)
    bench_dir = Path(config.out_dir) / "benchmark"
    if task == "grid":
        report = run_grid_benchmark(model, trials=trials, out_dir=bench_dir)
        click.echo(f"hit_rate={report.hit_rate:.3f} ({report.hits}/{report.expected_total})")
    else:
        report = run_marker_benchmark(model, trials=trials, seed=seed, out_dir=bench_dir)
        mean = "n/a" if report.mean_error is None else f"{report.mean_error:.3f}"
        click.echo(f"mean_error={mean} parse_failures={report.parse_failures}")
    click.echo(f"latency: mean={report.latency_mean:.4f}s std={report.latency_std:.4f}s")
    if out:
        _write_report(report.to_json(), out)


if __name__ == "__main__":
    main()
