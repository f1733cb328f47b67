"""HTTP API for live screening sessions.

Each session is journaled (append-only JSONL, one file per session) before
any response is sent, so a crashed service replays its journals on startup
and resumes every session exactly where it stopped. Per-session mutation is
serialized with a lock; a concurrent double-submit loses the race and gets
a 409.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import loop
from .dense import RocchioWeights
from .loop import Datasets, SessionConfig, SessionError, SessionState

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Wire schemas


class WeightsBody(BaseModel):
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0


class CreateSessionBody(BaseModel):
    topic_id: str
    strategy: str = "dense_rocchio"
    weights: WeightsBody = Field(default_factory=WeightsBody)
    k: int = 25


class JudgmentBody(BaseModel):
    doc_id: str
    relevant: bool


class SubmitJudgmentsBody(BaseModel):
    batch_token: str
    judgments: list[JudgmentBody]


class BatchDoc(BaseModel):
    doc_id: str
    title: str
    abstract: str
    score: float


class Progress(BaseModel):
    iteration: int
    screened: int
    relevant_found: int
    total: int
    recall_curve: list[tuple[int, int]]


class SessionCreated(BaseModel):
    session_id: str
    batch_token: str
    batch: list[BatchDoc]
    progress: Progress


class JudgmentsApplied(BaseModel):
    batch_token: str | None = None
    batch: list[BatchDoc] | None = None
    progress: Progress
    finished: bool


class SessionSummary(BaseModel):
    session_id: str
    topic_id: str
    strategy: str
    k: int
    iteration: int
    screened: int
    relevant_found: int
    total: int
    finished: bool
    outstanding_batch: list[str] | None = None
    batch_token: str | None = None


class TopicInfo(BaseModel):
    topic_id: str
    title_query: str
    pool_size: int


class DocumentBody(BaseModel):
    doc_id: str
    title: str
    abstract: str


# ---------------------------------------------------------------------------
# Session registry with journaling


@dataclass
class SessionHandle:
    session_id: str
    state: SessionState
    journal_path: Path
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    def __init__(self, datasets: Datasets, journal_dir: str | os.PathLike):
        self.datasets = datasets
        self.journal_dir = Path(journal_dir)
        self.journal_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, SessionHandle] = {}
        self.quarantined: dict[str, str] = {}
        self._registry_lock = threading.Lock()

    # -- journaling

    def _append(self, handle: SessionHandle, event: str, payload: dict) -> None:
        handle.seq += 1
        entry = {
            "session_id": handle.session_id,
            "seq": handle.seq,
            "event": event,
            "payload": payload,
        }
        with open(handle.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- lifecycle

    def create(self, config: SessionConfig) -> SessionHandle:
        session_id = uuid.uuid4().hex
        state = loop.start_session(config, self.datasets)
        handle = SessionHandle(
            session_id=session_id,
            state=state,
            journal_path=self.journal_dir / f"{session_id}.journal",
        )
        self._append(handle, "created", {"config": config.to_dict()})
        token, batch = loop.next_batch(state)
        self._append(
            handle, "batch_issued", {"token": token, "doc_ids": [s.doc_id for s in batch]}
        )
        with self._registry_lock:
            self.sessions[session_id] = handle
        return handle

    def get(self, session_id: str) -> SessionHandle:
        handle = self.sessions.get(session_id)
        if handle is None:
            raise KeyError(session_id)
        return handle

    def recover(self) -> None:
        """Replay every journal in the journal directory. Corrupt journals
        quarantine their session and leave the rest untouched."""
        for path in sorted(self.journal_dir.glob("*.journal")):
            session_id = path.stem
            try:
                handle = self._replay(session_id, path)
            except Exception as exc:  # noqa: BLE001 - quarantine any corruption
                log.warning("quarantining session %s: %s", session_id, exc)
                self.quarantined[session_id] = str(exc)
                continue
            self.sessions[session_id] = handle

    def _replay(self, session_id: str, path: Path) -> SessionHandle:
        handle: SessionHandle | None = None
        expected_seq = 0
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                entry = json.loads(line)
                expected_seq += 1
                if entry["seq"] != expected_seq:
                    raise ValueError(f"line {lineno}: seq {entry['seq']} != {expected_seq}")
                event, payload = entry["event"], entry["payload"]
                if event == "created":
                    config = SessionConfig.from_dict(payload["config"])
                    state = loop.start_session(config, self.datasets)
                    handle = SessionHandle(
                        session_id=session_id, state=state, journal_path=path, seq=expected_seq
                    )
                    continue
                if handle is None:
                    raise ValueError(f"line {lineno}: event before 'created'")
                handle.seq = expected_seq
                if event == "batch_issued":
                    token, batch = loop.next_batch(handle.state)
                    if token != payload["token"] or [s.doc_id for s in batch] != payload["doc_ids"]:
                        raise ValueError(f"line {lineno}: replayed batch diverges from journal")
                elif event == "judgments_applied":
                    loop.submit_feedback(
                        handle.state,
                        payload["token"],
                        [(j["doc_id"], j["relevant"]) for j in payload["judgments"]],
                    )
                else:
                    raise ValueError(f"line {lineno}: unknown event {event!r}")
        if handle is None:
            raise ValueError("journal has no 'created' entry")
        return handle


# ---------------------------------------------------------------------------
# App


def _progress(state: SessionState) -> Progress:
    return Progress(
        iteration=state.iteration,
        screened=len(state.screened),
        relevant_found=state.relevant_found,
        total=len(state.pool),
        recall_curve=state.recall_curve(),
    )


def _batch_docs(registry: SessionRegistry, state: SessionState) -> list[BatchDoc]:
    docs = []
    for scored in state.issued_batch or []:
        rec = registry.datasets.document(scored.doc_id)
        docs.append(
            BatchDoc(
                doc_id=rec.doc_id, title=rec.title, abstract=rec.abstract, score=scored.score
            )
        )
    return docs


def create_app(datasets: Datasets, journal_dir: str | os.PathLike) -> FastAPI:
    app = FastAPI(title="screenprio", version="0.1.0")
    registry = SessionRegistry(datasets, journal_dir)
    registry.recover()
    app.state.registry = registry

    def _error(status: int, error: str, detail: str):
        return JSONResponse(status_code=status, content={"error": error, "detail": detail})

    @app.exception_handler(SessionError)
    async def _session_error(_request, exc: SessionError):
        return _error(400, "invalid-input", str(exc))

    @app.get("/api/health")
    def health():
        return {"status": "ok", "sessions": len(registry.sessions)}

    @app.get("/api/topics", response_model=list[TopicInfo])
    def topics():
        return [
            TopicInfo(topic_id=t.topic_id, title_query=t.title_query, pool_size=len(t.pool))
            for t in sorted(datasets.topics.values(), key=lambda t: t.topic_id)
        ]

    @app.get("/api/documents/{doc_id}", response_model=DocumentBody)
    def document(doc_id: str):
        try:
            rec = datasets.document(doc_id)
        except KeyError:
            raise HTTPException(404, detail=f"unknown document {doc_id!r}")
        return DocumentBody(doc_id=rec.doc_id, title=rec.title, abstract=rec.abstract)

    @app.post("/api/sessions", response_model=SessionCreated, status_code=201)
    def create_session(body: CreateSessionBody):
        if body.topic_id not in datasets.topics:
            return _error(404, "not-found", f"unknown topic {body.topic_id!r}")
        try:
            config = SessionConfig(
                topic_id=body.topic_id,
                strategy=body.strategy,
                k=body.k,
                weights=RocchioWeights(body.weights.alpha, body.weights.beta, body.weights.gamma),
            )
            handle = registry.create(config)
        except (SessionError, ValueError) as exc:
            return _error(400, "invalid-input", str(exc))
        state = handle.state
        return SessionCreated(
            session_id=handle.session_id,
            batch_token=state.issued_token,
            batch=_batch_docs(registry, state),
            progress=_progress(state),
        )

    @app.post("/api/sessions/{session_id}/judgments", response_model=JudgmentsApplied)
    def submit_judgments(session_id: str, body: SubmitJudgmentsBody):
        try:
            handle = registry.get(session_id)
        except KeyError:
            return _error(404, "not-found", f"unknown session {session_id!r}")
        if not handle.lock.acquire(blocking=False):
            return _error(409, "conflict", "another submission is in flight")
        try:
            state = handle.state
            if state.finished:
                return _error(410, "gone", "session is finished")
            if state.issued_token is None or body.batch_token != state.issued_token:
                return _error(409, "conflict", f"stale batch token {body.batch_token!r}")
            judgments = [(j.doc_id, j.relevant) for j in body.judgments]
            try:
                loop.submit_feedback(state, body.batch_token, judgments)
            except SessionError as exc:
                return _error(400, "invalid-input", str(exc))
            registry._append(
                handle,
                "judgments_applied",
                {
                    "token": body.batch_token,
                    "judgments": [{"doc_id": d, "relevant": r} for d, r in judgments],
                },
            )
            next_token = None
            batch_docs = None
            if not state.finished:
                next_token, _batch = loop.next_batch(state)
                registry._append(
                    handle,
                    "batch_issued",
                    {"token": next_token, "doc_ids": [s.doc_id for s in _batch]},
                )
                batch_docs = _batch_docs(registry, state)
            return JudgmentsApplied(
                batch_token=next_token,
                batch=batch_docs,
                progress=_progress(state),
                finished=state.finished,
            )
        finally:
            handle.lock.release()

    @app.get("/api/sessions/{session_id}", response_model=SessionSummary)
    def get_session(session_id: str):
        try:
            handle = registry.get(session_id)
        except KeyError:
            return _error(404, "not-found", f"unknown session {session_id!r}")
        state = handle.state
        return SessionSummary(
            session_id=session_id,
            topic_id=state.config.topic_id,
            strategy=state.config.strategy,
            k=state.config.k,
            iteration=state.iteration,
            screened=len(state.screened),
            relevant_found=state.relevant_found,
            total=len(state.pool),
            finished=state.finished,
            outstanding_batch=(
                [s.doc_id for s in state.issued_batch] if state.issued_batch else None
            ),
            batch_token=state.issued_token,
        )

    return app
