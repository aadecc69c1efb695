"""HTTP/event service exposing the pipeline to the companion UI.

One session = one pipeline run. Stage transitions stream to the client as
ordered events; interactive clarification substitutions block the run until
the client posts a confirmation (or the 10-minute timeout fails the session).
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from typing import Callable

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .agents import Substitution
from .orchestrator import AblationMode, PipelineConfig, PipelineFailed, run_pipeline
from .tools import ThoughtTrace

CONFIRMATION_TIMEOUT_S = 600.0

TERMINAL_EVENTS = ("report_ready", "failed")


class ConfirmationTimeout(Exception):
    pass


@dataclass
class _PendingConfirmation:
    event: threading.Event = field(default_factory=threading.Event)
    accepted: bool | None = None


@dataclass
class Session:
    id: str
    query: str
    auto_confirm: bool
    ablation: AblationMode
    events: list[dict] = field(default_factory=list)
    condition: threading.Condition = field(default_factory=threading.Condition)
    pending: dict[int, _PendingConfirmation] = field(default_factory=dict)
    next_confirmation_index: int = 0
    report: dict | None = None
    report_markdown: str | None = None
    done: bool = False

    def publish(self, event_type: str, **data) -> None:
        with self.condition:
            self.events.append(
                {"index": len(self.events), "type": event_type, "data": data}
            )
            if event_type in TERMINAL_EVENTS:
                self.done = True
            self.condition.notify_all()

    def confirm_callback(self, substitution: Substitution) -> bool:
        if self.auto_confirm:
            return True
        with self.condition:
            index = self.next_confirmation_index
            self.next_confirmation_index += 1
            pending = _PendingConfirmation()
            self.pending[index] = pending
        self.publish(
            "clarification_proposed",
            substitution_index=index,
            original=substitution.original,
            replacement=substitution.replacement,
            category=substitution.category,
        )
        if not pending.event.wait(timeout=CONFIRMATION_TIMEOUT_S):
            raise ConfirmationTimeout(
                f"confirmation {index} not answered within "
                f"{int(CONFIRMATION_TIMEOUT_S)} seconds"
            )
        return bool(pending.accepted)

    def resolve_confirmation(self, index: int, accepted: bool) -> None:
        with self.condition:
            pending = self.pending.get(index)
            if pending is None:
                raise KeyError(index)
            if pending.event.is_set():
                raise ValueError("already resolved")
            pending.accepted = accepted
            pending.event.set()


class CreateSessionBody(BaseModel):
    query: str
    mode: str | None = None  # ablation flag (no_intent, ...) or None
    auto_confirm: bool = False


class ConfirmationBody(BaseModel):
    substitution_index: int
    accepted: bool


class _ForwardingTrace(ThoughtTrace):
    """Trace that mirrors stage transitions into the session event stream."""

    FORWARDED = ("stage_started", "stage_completed", "stage_filled", "backtrack")

    def __init__(self, session: Session):
        super().__init__()
        self._session = session

    def record_event(self, kind: str, **data) -> None:
        super().record_event(kind, **data)
        if kind in self.FORWARDED:
            self._session.publish(kind, **data)


def create_app(cfg_factory: Callable[[Session], PipelineConfig]) -> FastAPI:
    """Build the service app around a per-session pipeline-config factory."""
    app = FastAPI(title="openanalyst")
    sessions: dict[str, Session] = {}
    sessions_lock = threading.Lock()

    def get_session(session_id: str) -> Session:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="session not found")
        return session

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = Session(
            id=uuid.uuid4().hex,
            query=body.query,
            auto_confirm=body.auto_confirm,
            ablation=AblationMode.from_flag(body.mode),
        )
        with sessions_lock:
            sessions[session.id] = session

        # wrap the pipeline run so stage transitions surface as session events
        def runner() -> None:
            cfg = cfg_factory(session)
            cfg.mode = "auto_confirm" if session.auto_confirm else "interactive"
            try:
                result = run_pipeline(
                    session.query,
                    cfg,
                    ablation=session.ablation,
                    confirm=session.confirm_callback,
                    trace=_ForwardingTrace(session),
                )
            except PipelineFailed as exc:
                reason = (
                    "confirmation_timeout"
                    if isinstance(exc.__cause__, ConfirmationTimeout)
                    else "pipeline_failed"
                )
                session.publish("failed", reason=reason, detail=str(exc))
                return
            except Exception as exc:
                session.publish("failed", reason="internal_error", detail=str(exc))
                return
            session.report = result.report.as_dict()
            session.report_markdown = result.report.render_markdown()
            session.publish("report_ready", title=result.report.title)

        thread = threading.Thread(target=runner, daemon=True)
        thread.start()
        return {"session_id": session.id}

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, request: Request, since: int = 0):
        session = get_session(session_id)
        accept = request.headers.get("accept", "")
        if "text/event-stream" not in accept:
            with session.condition:
                return JSONResponse([e for e in session.events if e["index"] >= since])

        def stream():
            cursor = since
            while True:
                with session.condition:
                    while cursor >= len(session.events) and not session.done:
                        session.condition.wait(timeout=1.0)
                    batch = session.events[cursor:]
                    done = session.done
                for event in batch:
                    cursor = event["index"] + 1
                    payload = json.dumps(event)
                    yield f"id: {event['index']}\nevent: {event['type']}\ndata: {payload}\n\n"
                if done and cursor >= len(session.events):
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/confirmations")
    def post_confirmation(session_id: str, body: ConfirmationBody):
        session = get_session(session_id)
        try:
            session.resolve_confirmation(body.substitution_index, body.accepted)
        except KeyError:
            raise HTTPException(status_code=404, detail="no such pending substitution")
        except ValueError:
            raise HTTPException(status_code=409, detail="already resolved")
        return {"ok": True}

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        session = get_session(session_id)
        if session.report is None:
            raise HTTPException(status_code=404, detail="report not ready")
        return {"report": session.report, "markdown": session.report_markdown}

    return app
