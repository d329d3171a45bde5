"""Session-hosting HTTP service: chat, workflows, approvals, event streaming.

Each session runs its own worker thread; message handling, loop rounds, and
tool execution are strictly serialized inside it.  The HTTP layer only
enqueues commands and fans events out to subscribers, never touching the
context directly.  Events are pushed as a ``text/event-stream`` (one JSON
object per frame) and images are served by content-addressed id.
"""

from __future__ import annotations

import hashlib
import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import FileResponse, PlainTextResponse, StreamingResponse

from .agent import ApprovalDecision, ToolRegistry
from .beamline import VirtualBeamline
from .config import AppConfig, load_scenario, resolve_model
from .context import Message, TickClock, ToolCall, load_transcript, persist_transcript, utc_now
from .engine import LoopConfig, Session, run_loop
from .memory import MemoryStore
from .model import Model
from .tools import microscope_tools
from .workflows import (
    FeatureSearchParams,
    FocusingParams,
    run_feature_search,
    run_focusing,
)

MAX_IMAGE_BYTES = 10 * 1024 * 1024
EVENT_QUEUE_SIZE = 1000


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:32]


class ApprovalGate:
    """Blocks tool execution until a human decision arrives (or times out)."""

    def __init__(self, timeout: float = 300.0) -> None:
        self.timeout = timeout
        self._pending: dict[str, threading.Event] = {}
        self._decisions: dict[str, ApprovalDecision] = {}
        self._lock = threading.Lock()

    def __call__(self, call: ToolCall) -> ApprovalDecision:
        with self._lock:
            event = self._pending.setdefault(call.id, threading.Event())
        if not event.wait(self.timeout):
            with self._lock:
                self._pending.pop(call.id, None)
            return ApprovalDecision(
                call_id=call.id, approved=False, decider="timeout", at=utc_now()
            )
        with self._lock:
            self._pending.pop(call.id, None)
            return self._decisions[call.id]

    def pending_ids(self) -> list[str]:
        with self._lock:
            return list(self._pending)

    def decide(self, call_id: str, approved: bool, decider: str = "user") -> bool:
        """Record a decision; returns False if one already exists for this call."""
        with self._lock:
            if call_id in self._decisions:
                return False
            self._decisions[call_id] = ApprovalDecision(
                call_id=call_id, approved=approved, decider=decider, at=utc_now()
            )
            event = self._pending.setdefault(call_id, threading.Event())
        event.set()
        return True


@dataclass
class SessionRuntime:
    """One hosted session: worker thread, inbox, event fanout, approval gate."""

    session: Session
    service: "SessionService"
    inbox: queue.Queue = field(default_factory=queue.Queue)
    subscribers: list[queue.Queue] = field(default_factory=list)
    busy: bool = False
    last_report: Optional[dict] = None
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _event_seq: int = 0

    def __post_init__(self) -> None:
        self.approvals = ApprovalGate(timeout=self.service.config.approval_timeout)
        self.session.approval_source = self.approvals
        self.session.on_event = self.emit
        self.worker = threading.Thread(target=self._run, daemon=True)
        self.worker.start()

    # -- events ----------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=EVENT_QUEUE_SIZE)
        with self._lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def emit(self, kind: str, payload: dict) -> None:
        if kind == "message_appended":
            for part in payload.get("message", {}).get("parts", []):
                if part.get("kind") == "image_ref":
                    image_id = self.service.register_image(part["path"])
                    if image_id:
                        part["image_id"] = image_id
                        part["url"] = f"/images/{image_id}"
        with self._lock:
            self._event_seq += 1
            event = {"event_seq": self._event_seq, "type": kind, "session": self.session.id,
                     "payload": payload}
            for q in list(self.subscribers):
                try:
                    q.put_nowait(event)
                except queue.Full:
                    pass

    # -- worker ----------------------------------------------------------------

    def _run(self) -> None:
        while True:
            kind, data = self.inbox.get()
            try:
                if kind == "stop":
                    return
                if kind == "user_message":
                    self.session.add_user_message(data["text"], data.get("image_paths", ()))
                    run_loop(
                        self.session,
                        LoopConfig(require_signal_or_tool=False,
                                   max_rounds=data.get("max_rounds", 16)),
                    )
                elif kind == "workflow":
                    if data["kind"] == "focusing":
                        self.last_report = run_focusing(
                            self.session, FocusingParams(**data.get("params", {}))
                        )
                    else:
                        self.last_report = run_feature_search(
                            self.session, FeatureSearchParams(**data.get("params", {}))
                        )
                    self.emit("workflow_finished", {"report": self.last_report})
            except Exception as exc:
                self.emit("status_changed", {"status": "error", "detail": str(exc)})
            finally:
                if kind == "workflow":
                    self.busy = False
                self.persist()
                self.inbox.task_done()

    def persist(self) -> None:
        out = self.service.sessions_dir
        out.mkdir(parents=True, exist_ok=True)
        persist_transcript(self.session.context, out / f"{self.session.id}.jsonl")
        state: dict[str, Any] = {"session_id": self.session.id, "busy": self.busy}
        if self.session.beamline is not None:
            snap = self.session.beamline.snapshot()
            state["beamline"] = {
                "stage_x": snap.stage_x,
                "stage_y": snap.stage_y,
                "zone_plate_z": snap.zone_plate_z,
                "drift_x": snap.drift_x,
                "drift_y": snap.drift_y,
            }
        (out / f"{self.session.id}_state.json").write_text(json.dumps(state, indent=1))


class SessionService:
    """Owns all hosted sessions plus the content-addressed image index."""

    def __init__(self, config: AppConfig, model: Optional[Model] = None,
                 deterministic_clock: bool = False) -> None:
        self.config = config
        self.model = model
        self.deterministic_clock = deterministic_clock
        self.out_dir = Path(config.out_dir)
        self.sessions_dir = self.out_dir / "sessions"
        self.runtimes: dict[str, SessionRuntime] = {}
        self._images: dict[str, str] = {}
        self._lock = threading.Lock()

    def register_image(self, path: str) -> str | None:
        p = Path(path)
        try:
            data = p.read_bytes()
        except OSError:
            return None
        image_id = content_id(data)
        with self._lock:
            self._images[image_id] = str(p)
        return image_id

    def image_path(self, image_id: str) -> str | None:
        with self._lock:
            return self._images.get(image_id)

    def create_session(
        self,
        session_id: str | None = None,
        scenario_path: str | None = None,
        system_prompt: str = "",
        model_spec: str | None = None,
        resume: bool = False,
    ) -> SessionRuntime:
        sid = session_id or uuid.uuid4().hex[:12]
        if sid in self.runtimes:
            raise ValueError(f"session {sid!r} already exists")
        model = self.model if model_spec is None else resolve_model(model_spec, self.config)
        if model is None:
            model = resolve_model(None, self.config)
        scenario = load_scenario(scenario_path or self.config.scenario_path)
        beamline = VirtualBeamline(scenario, out_dir=self.out_dir, session=sid)
        registry = ToolRegistry()
        for tool in microscope_tools(beamline):
            registry.register(tool)
        memory = None
        if self.config.memory.enabled:
            memory = MemoryStore(
                path=self.config.memory.path or self.out_dir / "memory.jsonl",
                dimension=self.config.memory.dimension,
            )
        session = Session(
            session_id=sid,
            model=model,
            registry=registry,
            beamline=beamline,
            memory=memory,
            memory_k=self.config.memory.k,
            clock=TickClock() if self.deterministic_clock else None,
            system_prompt=system_prompt,
        )
        transcript_path = self.sessions_dir / f"{sid}.jsonl"
        if resume and transcript_path.exists():
            session.context = load_transcript(transcript_path)
        runtime = SessionRuntime(session=session, service=self)
        self.runtimes[sid] = runtime
        return runtime

    def get(self, session_id: str) -> SessionRuntime:
        runtime = self.runtimes.get(session_id)
        if runtime is None:
            raise KeyError(session_id)
        return runtime


def create_app(config: AppConfig | None = None, model: Optional[Model] = None,
               service: Optional[SessionService] = None) -> FastAPI:
    """Build the HTTP app; a prebuilt service may be injected for tests."""
    svc = service or SessionService(config or AppConfig(), model=model)
    app = FastAPI(title="eaa", version="0.1.0")
    app.state.service = svc

    def _runtime(session_id: str) -> SessionRuntime:
        try:
            return svc.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    @app.post("/sessions")
    def create_session(body: dict | None = None):
        body = body or {}
        try:
            runtime = svc.create_session(
                session_id=body.get("session_id"),
                scenario_path=body.get("scenario"),
                system_prompt=body.get("system_prompt", ""),
                model_spec=body.get("model"),
                resume=bool(body.get("resume", False)),
            )
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"id": runtime.session.id}

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        runtime = _runtime(session_id)
        return {
            "id": session_id,
            "messages": len(runtime.session.context),
            "busy": runtime.busy,
            "pending_approvals": runtime.approvals.pending_ids(),
            "report": runtime.last_report,
        }

    @app.post("/sessions/{session_id}/messages")
    async def post_message(
        session_id: str,
        text: str = Form(""),
        images: list[UploadFile] = File(default=[]),
    ):
        runtime = _runtime(session_id)
        saved: list[str] = []
        upload_dir = svc.out_dir / session_id / "uploads"
        for i, upload in enumerate(images):
            data = await upload.read()
            if len(data) > MAX_IMAGE_BYTES:
                raise HTTPException(status_code=413, detail="image exceeds 10 MB")
            upload_dir.mkdir(parents=True, exist_ok=True)
            suffix = Path(upload.filename or "paste.png").suffix or ".png"
            path = upload_dir / f"{content_id(data)}{suffix}"
            path.write_bytes(data)
            svc.register_image(str(path))
            saved.append(str(path))
        runtime.inbox.put(("user_message", {"text": text, "image_paths": saved}))
        return {"queued": True, "images": len(saved)}

    @app.post("/sessions/{session_id}/workflows/{kind}")
    def start_workflow(session_id: str, kind: str, params: dict | None = None):
        runtime = _runtime(session_id)
        if kind not in ("focusing", "feature-search"):
            raise HTTPException(status_code=404, detail=f"unknown workflow {kind!r}")
        if runtime.busy:
            raise HTTPException(status_code=409, detail="a workflow is already running")
        runtime.busy = True
        runtime.inbox.put(
            ("workflow", {"kind": "focusing" if kind == "focusing" else "feature_search",
                          "params": params or {}})
        )
        return {"started": kind}

    @app.post("/sessions/{session_id}/approvals/{call_id}")
    def decide_approval(session_id: str, call_id: str, body: dict):
        runtime = _runtime(session_id)
        if "approved" not in body:
            raise HTTPException(status_code=422, detail="body must contain 'approved'")
        fresh = runtime.approvals.decide(
            call_id, bool(body["approved"]), decider=body.get("decider", "user")
        )
        if not fresh:
            raise HTTPException(status_code=409, detail="call already decided")
        return {"call_id": call_id, "approved": bool(body["approved"])}

    @app.get("/sessions/{session_id}/events")
    def event_stream(session_id: str, limit: int | None = None):
        """Server-push event stream; ``limit`` ends it after N events (polling)."""
        runtime = _runtime(session_id)
        q = runtime.subscribe()

        def frames():
            sent = 0
            try:
                while limit is None or sent < limit:
                    try:
                        event = q.get(timeout=2.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    sent += 1
                    yield f"data: {json.dumps(event)}\n\n"
            finally:
                runtime.unsubscribe(q)

        return StreamingResponse(frames(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str):
        runtime = _runtime(session_id)
        path = svc.sessions_dir / f"{session_id}.jsonl"
        if not path.exists():
            runtime.persist()
        return PlainTextResponse(path.read_text(encoding="utf-8"),
                                 media_type="application/jsonl")

    @app.get("/images/{image_id}")
    def image(image_id: str):
        path = svc.image_path(image_id)
        if path is None or not Path(path).exists():
            raise HTTPException(status_code=404, detail="unknown image")
        return FileResponse(path, media_type="image/png")

    frontend_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend_dist.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
