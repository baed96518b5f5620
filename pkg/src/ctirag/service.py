"""HTTP API exposing the engine to the web UI.

State is scoped per session_id (issued by POST /api/session) so concurrent
users stay isolated. Uploads are staged in the data directory and only reach
the live store when POST /api/embed rebuilds it; the in-memory store handle is
swapped atomically, so readers keep the old snapshot until the build finishes.
"""

from __future__ import annotations

import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .embedding import Embedder, HashedEmbedder
from .engine import EngineConfig, Session, answer_query, ingest_directory
from .gateway import Gateway, GatewayError, MalformedModelRef, ModelRef
from .kgraph import graph_to_json
from .vectorstore import INDEX_FILENAME, VectorStore

logger = logging.getLogger(__name__)

UPLOAD_SUFFIXES = (".txt", ".pdf")


@dataclass
class ServiceConfig:
    data_dir: Path
    store_path: Path
    model: str = "mock:scripted"
    top_k: int = 6
    graph_enabled: bool = True
    upload_max_bytes: int = 10 * 1024 * 1024
    mock_script: Path | str | list | None = None
    webui_dir: Path | None = None


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


class QueryBody(BaseModel):
    session_id: str
    question: str


class ModelBody(BaseModel):
    session_id: str
    model: str


class SessionBody(BaseModel):
    model: str | None = None


class SessionRefBody(BaseModel):
    session_id: str


@dataclass
class AppState:
    config: ServiceConfig
    embedder: Embedder
    gateway: Gateway
    store: VectorStore | None = None
    sessions: dict[str, Session] = field(default_factory=dict)
    session_locks: dict[str, threading.Lock] = field(default_factory=dict)
    state_lock: threading.Lock = field(default_factory=threading.Lock)
    ingest_lock: threading.Lock = field(default_factory=threading.Lock)


def _safe_name(name: str) -> bool:
    return (
        bool(name)
        and "/" not in name
        and "\\" not in name
        and ".." not in name
        and name not in (".", "")
        and not name.startswith(".")
    )


def create_app(config: ServiceConfig, embedder: Embedder | None = None, gateway: Gateway | None = None) -> FastAPI:
    config.data_dir = Path(config.data_dir)
    config.store_path = Path(config.store_path)
    state = AppState(
        config=config,
        embedder=embedder or HashedEmbedder(),
        gateway=gateway or Gateway(mock_script=config.mock_script),
    )
    if (config.store_path / INDEX_FILENAME).exists():
        state.store = VectorStore.open(config.store_path)

    app = FastAPI(title="ctirag service")
    app.state.ctirag = state

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422, content={"code": "validation_error", "message": str(exc.errors()[:3])}
        )

    def get_session(session_id: str) -> tuple[Session, threading.Lock]:
        with state.state_lock:
            session = state.sessions.get(session_id)
            if session is None:
                raise ApiError(404, "unknown_session", f"no session {session_id!r}")
            return session, state.session_locks[session_id]

    # -- sessions -----------------------------------------------------------

    @app.post("/api/session")
    def create_session(body: SessionBody | None = None):
        raw = (body.model if body else None) or config.model
        try:
            ref = ModelRef.parse(raw)
        except MalformedModelRef as exc:
            raise ApiError(400, "malformed_model_ref", str(exc))
        if not state.gateway.knows_provider(ref.provider):
            raise ApiError(404, "unknown_provider", f"provider {ref.provider!r} is not registered")
        session_id = uuid.uuid4().hex
        session = Session(
            store=state.store,
            embedder=state.embedder,
            gateway=state.gateway,
            config=EngineConfig(model=ref, top_k=config.top_k, graph_enabled=config.graph_enabled),
        )
        with state.state_lock:
            state.sessions[session_id] = session
            state.session_locks[session_id] = threading.Lock()
        return {"session_id": session_id, "active_model": ref.canonical()}

    # -- query --------------------------------------------------------------

    @app.post("/api/query")
    def query(body: QueryBody):
        session, lock = get_session(body.session_id)
        if not body.question.strip():
            raise ApiError(422, "empty_question", "question must be non-empty")
        with lock:
            with state.state_lock:
                store = state.store
            if store is None:
                raise ApiError(409, "store_not_built", "no vector store; upload documents and POST /api/embed")
            session.store = store
            try:
                result = answer_query(session, body.question)
            except GatewayError as exc:
                raise ApiError(502, "provider_error", str(exc))
        return {
            "answer": result.answer,
            "graph": graph_to_json(result.graph),
            "hits": [
                {
                    "chunk_id": hit.chunk_id,
                    "score": hit.score,
                    "source": hit.metadata.get("source", ""),
                    "page": hit.metadata.get("page_index", 0),
                }
                for hit in result.hits
            ],
            "skipped_triples": result.skipped_triples,
        }

    # -- model switching ------------------------------------------------------

    @app.post("/api/model")
    def set_model(body: ModelBody):
        session, lock = get_session(body.session_id)
        try:
            ref = ModelRef.parse(body.model)
        except MalformedModelRef as exc:
            raise ApiError(400, "malformed_model_ref", str(exc))
        if not state.gateway.knows_provider(ref.provider):
            raise ApiError(404, "unknown_provider", f"provider {ref.provider!r} is not registered")
        with lock:
            session.conversation.switch_model(ref)
        return {"active_model": ref.canonical()}

    # -- history --------------------------------------------------------------

    @app.get("/api/history")
    def get_history(session_id: str):
        session, lock = get_session(session_id)
        with lock:
            return {
                "turns": [{"role": t.role, "content": t.content} for t in session.conversation.turns],
                "active_model": session.conversation.active_model.canonical(),
            }

    @app.post("/api/history/clear")
    def clear_history(body: SessionRefBody):
        session, lock = get_session(body.session_id)
        with lock:
            session.conversation.clear_history()
            return {
                "cleared": True,
                "active_model": session.conversation.active_model.canonical(),
            }

    # -- documents ------------------------------------------------------------

    @app.get("/api/documents")
    def list_documents():
        config.data_dir.mkdir(parents=True, exist_ok=True)
        documents = [
            {"name": p.name, "size": p.stat().st_size}
            for p in sorted(config.data_dir.iterdir(), key=lambda p: p.name)
            if p.is_file() and p.suffix.lower() in UPLOAD_SUFFIXES
        ]
        return {"documents": documents}

    @app.post("/api/documents")
    def upload_document(file: UploadFile):
        name = file.filename or ""
        if not _safe_name(name):
            raise ApiError(400, "unsafe_filename", f"rejecting filename {name!r}")
        if Path(name).suffix.lower() not in UPLOAD_SUFFIXES:
            raise ApiError(400, "unsupported_type", f"only {UPLOAD_SUFFIXES} uploads are supported")
        data = file.file.read(config.upload_max_bytes + 1)
        if len(data) > config.upload_max_bytes:
            raise ApiError(413, "too_large", f"upload exceeds {config.upload_max_bytes} bytes")
        config.data_dir.mkdir(parents=True, exist_ok=True)
        (config.data_dir / name).write_bytes(data)
        return {"name": name, "size": len(data)}

    @app.delete("/api/documents/{name}")
    def delete_document(name: str):
        if not _safe_name(name):
            raise ApiError(400, "unsafe_filename", f"rejecting filename {name!r}")
        path = config.data_dir / name
        if not path.is_file():
            raise ApiError(404, "not_found", f"no staged document {name!r}")
        path.unlink()
        return {"deleted": name}

    # -- ingestion --------------------------------------------------------------

    @app.post("/api/embed")
    def embed():
        if not state.ingest_lock.acquire(blocking=False):
            raise ApiError(409, "ingest_running", "an ingestion is already running")
        try:
            data_dir = config.data_dir
            has_docs = data_dir.is_dir() and any(
                p.is_file() and p.suffix.lower() in UPLOAD_SUFFIXES for p in data_dir.iterdir()
            )
            if not has_docs:
                raise ApiError(409, "no_documents", "data directory has no documents to ingest")
            try:
                new_store = ingest_directory(data_dir, config.store_path, state.embedder)
            except ApiError:
                raise
            except Exception as exc:
                logger.exception("ingestion pipeline failed")
                raise ApiError(500, "pipeline_failed", f"{type(exc).__name__}: {exc}")
            with state.state_lock:
                state.store = new_store
            return {"chunk_count": new_store.stats()["count"]}
        finally:
            state.ingest_lock.release()

    if config.webui_dir and Path(config.webui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(config.webui_dir), html=True), name="webui")

    return app
