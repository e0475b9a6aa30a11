"""HTTP JSON interface for the inference engine.

Sessions are in-memory and strictly serial: a second message while one is
in flight gets 409. On shutdown every session's transcript is appended to
a JSON-lines file when a transcript path is configured.
"""

from __future__ import annotations

import json
import threading
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Mapping, Optional, Union

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .. import dbexec, llmclient
from ..errors import PipelineError
from .answerers import Answerer
from .engine import FlowConfig, SessionState, init_session, step


class CreateSessionBody(BaseModel):
    database_id: str


class MessageBody(BaseModel):
    text: str


class _Session:
    def __init__(self, session_id: str, state: SessionState) -> None:
        self.session_id = session_id
        self.state = state
        self.lock = threading.Lock()


def create_app(
    catalog: Mapping[str, dbexec.DatabaseRef],
    flow_cfg: FlowConfig,
    answer_source: Union[Answerer, llmclient.Transport],
    transcripts_path: Optional[Path] = None,
    static_dir: Optional[Path] = None,
) -> FastAPI:
    sessions: dict[str, _Session] = {}
    counter = {"next": 1}
    counter_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        _dump_transcripts(transcripts_path, sessions)

    app = FastAPI(title="convsql", version="0.1.0", lifespan=lifespan)

    @app.get("/databases")
    def list_databases() -> list[dict]:
        out = []
        for db_id in sorted(catalog):
            schema = catalog[db_id].schema
            out.append(
                {
                    "database_id": db_id,
                    "tables": [
                        {"name": t.name, "columns": [c.name for c in t.columns]}
                        for t in schema.tables
                    ],
                }
            )
        return out

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        db = catalog.get(body.database_id)
        if db is None:
            raise HTTPException(404, f"unknown database {body.database_id!r}")
        with counter_lock:
            session_id = f"sess-{counter['next']}"
            counter["next"] += 1
        sessions[session_id] = _Session(session_id, init_session(db, flow_cfg))
        return {"session_id": session_id, "database_id": body.database_id}

    def _get(session_id: str) -> _Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        session = _get(session_id)
        if not body.text.strip():
            raise HTTPException(400, "empty message")
        if not session.lock.acquire(blocking=False):
            raise HTTPException(409, "session is busy with another message")
        try:
            result = step(session.state, body.text, answer_source)
        except PipelineError as exc:
            raise HTTPException(502, str(exc)) from exc
        finally:
            session.lock.release()
        payload = result.to_json()
        payload["error_log"] = [e.to_json() for e in session.state.error_log]
        return payload

    @app.get("/sessions/{session_id}/history")
    def get_history(session_id: str) -> list[dict]:
        session = _get(session_id)
        return [t.to_json() for t in session.state.history]

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def _dump_transcripts(path: Optional[Path], sessions: Mapping[str, _Session]) -> None:
    if path is None or not sessions:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as handle:
        for session in sessions.values():
            handle.write(
                json.dumps(
                    {
                        "session_id": session.session_id,
                        "database_id": session.state.db.database_id,
                        "turns": [t.to_json() for t in session.state.history],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
