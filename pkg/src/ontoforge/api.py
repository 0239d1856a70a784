"""HTTP surface over the session service.

Sync endpoints on purpose: the framework runs them in a worker pool, so the
long-poll events route can block without stalling anything else.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .errors import (
    BadConfig,
    BadParams,
    EditValidationFailed,
    EmptyInput,
    EmptyText,
    FixtureMiss,
    InvalidGraph,
    InvalidOntology,
    NotAvailable,
    NotReady,
    OntoforgeError,
    SessionBusy,
    StageError,
    UnknownSession,
)
from .service import SessionService

_STATUS = {
    UnknownSession: 404,
    SessionBusy: 409,
    NotReady: 409,
    NotAvailable: 409,
    StageError: 409,
    BadParams: 400,
    EmptyInput: 400,
    EmptyText: 400,
    BadConfig: 400,
    EditValidationFailed: 422,
    InvalidOntology: 422,
    InvalidGraph: 422,
    FixtureMiss: 500,
}

_ARTIFACT_TYPES = {
    "ontology": "application/json",
    "kg": "application/json",
    "cypher": "text/plain",
}


def _error_payload(exc: OntoforgeError) -> dict:
    payload = {"error": type(exc).__name__, "detail": str(exc)}
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report.to_dict()
    artifact = getattr(exc, "artifact", None)
    if artifact is not None:
        payload["artifact"] = artifact
    return payload


def create_app(service: SessionService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ontoforge", docs_url=None, redoc_url=None)

    @app.exception_handler(OntoforgeError)
    def _handle_domain_error(request: Request, exc: OntoforgeError):
        status = 500
        for klass, code in _STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        return JSONResponse(status_code=status, content=_error_payload(exc))

    @app.post("/sessions", status_code=201)
    def create_session():
        return service.create_session()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.get_session(session_id)

    @app.post("/sessions/{session_id}/message")
    def post_message(session_id: str, body: dict = Body(...)):
        return service.handle_message(session_id, body.get("kind", ""), body.get("text", ""))

    @app.post("/sessions/{session_id}/advance")
    def post_advance(session_id: str):
        return service.advance(session_id)

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, after: int = 0, timeout: float = 25.0):
        timeout = max(0.0, min(timeout, 60.0))
        return {"events": service.events_after(session_id, after, timeout)}

    @app.get("/sessions/{session_id}/artifacts/{artifact}")
    def get_artifact(session_id: str, artifact: str):
        if artifact not in _ARTIFACT_TYPES:
            raise NotAvailable(artifact)
        payload = service.export_artifacts(session_id, {artifact})[artifact]
        return Response(content=payload, media_type=_ARTIFACT_TYPES[artifact])

    @app.post("/sessions/{session_id}/push-db")
    def post_push_db(session_id: str, body: dict = Body(...)):
        endpoint = body.get("endpoint")
        if not endpoint:
            raise BadParams("push-db needs an 'endpoint' URL")
        credentials = None
        if body.get("username") is not None:
            credentials = (body["username"], body.get("password", ""))
        return service.push_db(session_id, endpoint, credentials,
                               body.get("database", "neo4j"))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
