"""HTTP wrapper around the session engine.

One process hosts many sessions, each guarded by a non-blocking lock: a
mutating request that arrives while another is still driving the same
session gets 409 busy rather than queueing up behind a slow provider.

Event streaming is long-poll NDJSON. Clients pass ?from=<last seen
sequence> to resume; the stream closes after the terminal event, or after
`wait` seconds with nothing new, and the client simply reconnects.
"""
from __future__ import annotations

import asyncio
import itertools
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .. import __version__
from ..errors import (
    EngineError,
    FixtureInvalid,
    GatewayError,
    IllegalTransition,
    InvalidTarget,
    NotACandidate,
    NothingInProgress,
    OutOfOrderCheckpoint,
    ProviderUnavailable,
    SessionStillLive,
    StorageFailure,
    TaskNotStarted,
    UnknownTask,
    ValidationError,
    WrongMode,
    WrongPhase,
)
from ..gateway import HttpChatProvider, Provider, ProviderConfig, ScriptedProvider
from ..graph import AttackGraph, load_graph_file, sample_graph_path
from ..pipeline import PipelineMode, SessionConfig
from ..runner import SessionRunner
from ..store import compute_metrics
from .schemas import (
    AbortBody,
    CheckpointBody,
    CreateSessionBody,
    GraphView,
    MetricsView,
    SelectionBody,
    SessionSummary,
    SessionView,
    StatusBody,
    ToolOutputBody,
)


@dataclass
class ServiceSettings:
    graph_path: str | Path | None = None
    provider_config: ProviderConfig | None = None
    provider_factory: Callable[[], Provider] | None = None
    script_path: str | Path | None = None


@dataclass
class _SessionEntry:
    runner: SessionRunner
    lock: threading.Lock = field(default_factory=threading.Lock)


class ApiError(Exception):
    def __init__(self, status: int, slug: str, message: str):
        self.status = status
        self.slug = slug
        self.message = message


_CONFLICTS = (
    WrongPhase,
    WrongMode,
    IllegalTransition,
    SessionStillLive,
    OutOfOrderCheckpoint,
    TaskNotStarted,
    NothingInProgress,
)
_BAD_REQUESTS = (InvalidTarget, NotACandidate, UnknownTask, FixtureInvalid, ValidationError)


def _slug(err: Exception) -> str:
    return {
        "WrongPhase": "wrong-phase",
        "WrongMode": "wrong-mode",
        "IllegalTransition": "illegal-transition",
        "SessionStillLive": "session-still-live",
        "OutOfOrderCheckpoint": "out-of-order-checkpoint",
        "TaskNotStarted": "task-not-started",
        "NothingInProgress": "nothing-in-progress",
        "InvalidTarget": "invalid-target",
        "NotACandidate": "not-a-candidate",
        "UnknownTask": "unknown-task",
        "FixtureInvalid": "fixture-invalid",
        "ValidationError": "invalid-graph",
    }.get(type(err).__name__, "engine-error")


def _map_error(err: Exception) -> ApiError:
    if isinstance(err, ApiError):
        return err
    if isinstance(err, _CONFLICTS):
        return ApiError(409, _slug(err), str(err))
    if isinstance(err, _BAD_REQUESTS):
        return ApiError(400, _slug(err), str(err))
    if isinstance(err, (ProviderUnavailable, GatewayError)):
        return ApiError(502, "provider-unavailable", str(err))
    if isinstance(err, StorageFailure):
        return ApiError(500, "storage-failure", str(err))
    if isinstance(err, ValueError):
        return ApiError(400, "bad-value", str(err))
    if isinstance(err, EngineError):
        return ApiError(409, "engine-error", str(err))
    raise err


def load_provider_script(path: str | Path) -> list[dict]:
    try:
        raw = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise FixtureInvalid(f"cannot load provider script {path}: {err}") from err
    if isinstance(raw, dict) and "provider_script" in raw:
        raw = raw["provider_script"]
    if not isinstance(raw, list):
        raise FixtureInvalid(f"provider script {path} must be a list of entries")
    ScriptedProvider.from_raw(raw)
    return raw


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings()
    graph: AttackGraph = load_graph_file(settings.graph_path or sample_graph_path())
    script: list[dict] | None = load_provider_script(settings.script_path) if settings.script_path else None

    app = FastAPI(title="pentree", version=__version__)
    # the dashboard is served separately from the API
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, _SessionEntry] = {}
    ids = itertools.count(1)
    app.state.sessions = sessions
    app.state.graph = graph

    @app.exception_handler(ApiError)
    async def on_api_error(_request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.slug, "message": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(_request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"error": "validation", "message": str(exc)}
        )

    def make_provider() -> Provider:
        if settings.provider_factory is not None:
            return settings.provider_factory()
        if script is not None:
            return ScriptedProvider.from_raw(script)
        if settings.provider_config is not None:
            return HttpChatProvider(settings.provider_config)
        raise ApiError(400, "no-provider", "the server has no model provider configured")

    def get_entry(sid: str) -> _SessionEntry:
        entry = sessions.get(sid)
        if entry is None:
            raise ApiError(404, "not-found", f"no session {sid}")
        return entry

    def view_of(sid: str, entry: _SessionEntry) -> SessionView:
        data = entry.runner.view()
        data["id"] = sid
        return SessionView(**data)

    def locked(entry: _SessionEntry):
        if not entry.lock.acquire(blocking=False):
            raise ApiError(409, "busy", "another request is driving this session")
        return entry.lock

    @app.get("/")
    def root():
        return {"service": "pentree", "version": __version__, "sessions": len(sessions)}

    @app.get("/graph", response_model=GraphView)
    def get_graph():
        return GraphView(
            initial_task=graph.initial_task,
            content_hash=graph.content_hash,
            tasks=[
                {
                    "id": t.id,
                    "name": t.name,
                    "tactic": t.tactic,
                    "description": t.description,
                    "next": list(t.next),
                }
                for t in (graph.tasks[tid] for tid in graph.order)
            ],
        )

    @app.post("/sessions", response_model=SessionView, status_code=201)
    def create_session(body: CreateSessionBody):
        sid = f"s-{next(ids)}"
        try:
            provider = make_provider()
            config = (
                SessionConfig(**body.config.model_dump()) if body.config else SessionConfig()
            )
            runner = SessionRunner(
                mode=PipelineMode(body.mode),
                target=body.target,
                provider=provider,
                graph=graph if body.mode == "guided" else None,
                config=config,
                auto_apply=body.auto_apply,
                halt_on_provider_error=False,
                name=body.name or sid,
            )
            runner.start()
        except Exception as err:
            # nothing is registered on failure; creation is all or nothing
            raise _map_error(err) from err
        sessions[sid] = _SessionEntry(runner=runner)
        return view_of(sid, sessions[sid])

    @app.get("/sessions", response_model=list[SessionSummary])
    def list_sessions():
        out = []
        for sid, entry in sessions.items():
            s = entry.runner.session
            out.append(
                SessionSummary(
                    id=sid,
                    name=entry.runner.name,
                    mode=s.mode.value,
                    target=s.target,
                    phase=s.phase.value,
                    outcome=s.outcome.value if s.outcome else None,
                )
            )
        return out

    @app.get("/sessions/{sid}", response_model=SessionView)
    def get_session(sid: str):
        return view_of(sid, get_entry(sid))

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        entry = get_entry(sid)
        runner = entry.runner
        if runner.session.mode is not PipelineMode.GUIDED:
            raise ApiError(409, "wrong-mode", "baseline sessions have no task tree")
        return {
            "graph_hash": runner.stt.graph.content_hash,
            "stt": runner.stt.to_dict(),
        }

    @app.get("/sessions/{sid}/metrics", response_model=MetricsView)
    def get_metrics(sid: str, subtasks_total: int = Query(ge=0)):
        entry = get_entry(sid)
        try:
            metrics = compute_metrics(
                entry.runner.log,
                subtasks_total,
                name=entry.runner.name,
                mode=entry.runner.session.mode.value,
            )
        except Exception as err:
            raise _map_error(err) from err
        return MetricsView(**metrics.to_dict())

    def mutate(sid: str, action: Callable[[SessionRunner], None]) -> SessionView:
        entry = get_entry(sid)
        lock = locked(entry)
        try:
            action(entry.runner)
        except Exception as err:
            raise _map_error(err) from err
        finally:
            lock.release()
        return view_of(sid, entry)

    @app.post("/sessions/{sid}/tool-output", response_model=SessionView)
    def tool_output(sid: str, body: ToolOutputBody):
        return mutate(sid, lambda r: r.submit_tool_output(body.classification, body.text))

    @app.post("/sessions/{sid}/status", response_model=SessionView)
    def override_status(sid: str, body: StatusBody):
        return mutate(sid, lambda r: r.apply_status(body.task, body.to))

    @app.post("/sessions/{sid}/selection", response_model=SessionView)
    def override_selection(sid: str, body: SelectionBody):
        return mutate(sid, lambda r: r.apply_selection(body.task))

    @app.post("/sessions/{sid}/continue", response_model=SessionView)
    def continue_current(sid: str):
        return mutate(sid, lambda r: r.continue_current())

    @app.post("/sessions/{sid}/abort", response_model=SessionView)
    def abort(sid: str, body: AbortBody | None = None):
        reason = body.reason if body else "operator abort"
        return mutate(sid, lambda r: r.abort(reason))

    @app.post("/sessions/{sid}/checkpoint", response_model=SessionView)
    def checkpoint(sid: str, body: CheckpointBody):
        return mutate(sid, lambda r: r.mark_checkpoint(body.label))

    @app.post("/sessions/{sid}/resume", response_model=SessionView)
    def resume(sid: str):
        return mutate(sid, lambda r: r.resume_pending())

    @app.get("/sessions/{sid}/events")
    async def events(
        request: Request,
        sid: str,
        from_seq: int = Query(0, alias="from", ge=0),
        wait: float = Query(25.0, ge=0, le=60),
    ):
        entry = get_entry(sid)

        async def gen():
            cursor = from_seq
            deadline = time.monotonic() + wait
            while True:
                log_events = entry.runner.log.events
                advanced = False
                while cursor < len(log_events):
                    event = log_events[cursor]
                    cursor += 1
                    advanced = True
                    yield json.dumps(event.to_dict()) + "\n"
                    if event.kind == "SessionTerminated":
                        return
                if advanced:
                    deadline = time.monotonic() + wait
                if time.monotonic() >= deadline:
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(0.05)

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    return app
