"""HTTP/JSON API over the engine.

Every non-2xx response body is exactly one error record: {code, message,
detail}. Client-scoped endpoints reject missing or foreign tokens with
not_found so that session and client identifiers never leak existence.
"""

from __future__ import annotations

import logging
from typing import Any

from fastapi import Body, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (
    ConfigurationError,
    ConflictError,
    CounselkitError,
    IntegrityError,
    NotFoundError,
    ProviderError,
)
from .knowledge import KnowledgePack
from .orchestrator import Engine

logger = logging.getLogger(__name__)

_STATUS_FOR_CODE = {
    "not_found": 404,
    "conflict": 409,
    "bad_request": 400,
    "provider_unavailable": 503,
    "integrity": 500,
}


class ApiException(Exception):
    def __init__(self, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.detail = detail


def _api_error_response(code: str, message: str, detail: dict | None = None) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_FOR_CODE[code],
        content={"code": code, "message": message, "detail": detail},
    )


class CreateClientBody(BaseModel):
    display_name: str


class OpenSessionBody(BaseModel):
    mode: str = "ca_plus"
    persona_id: str = "ellis"


class MessageBody(BaseModel):
    text: str


def create_app(engine: Engine, admin_token: str | None = None) -> FastAPI:
    app = FastAPI(title="counselkit", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiException)
    async def handle_api_exception(request: Request, exc: ApiException):
        return _api_error_response(exc.code, exc.message, exc.detail)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return _api_error_response("bad_request", "invalid request body",
                                   {"errors": [str(e.get("msg", e)) for e in exc.errors()]})

    @app.exception_handler(CounselkitError)
    async def handle_engine_error(request: Request, exc: CounselkitError):
        if isinstance(exc, NotFoundError):
            return _api_error_response("not_found", str(exc))
        if isinstance(exc, ConflictError):
            return _api_error_response("conflict", str(exc))
        if isinstance(exc, ProviderError):
            return _api_error_response("provider_unavailable", str(exc),
                                       {"attempts": exc.attempts})
        if isinstance(exc, (ConfigurationError, ValueError)):
            return _api_error_response("bad_request", str(exc))
        if isinstance(exc, IntegrityError):
            return _api_error_response("integrity", str(exc))
        logger.exception("unhandled engine error")
        return _api_error_response("integrity", str(exc))

    def client_from_auth(authorization: str | None) -> dict:
        # Missing, malformed, or foreign tokens all read as not_found.
        if not authorization or not authorization.startswith("Bearer "):
            raise ApiException("not_found", "unknown resource")
        client = engine.store.client_by_token(authorization.removeprefix("Bearer ").strip())
        if client is None:
            raise ApiException("not_found", "unknown resource")
        return client

    def owned_session(session_id: str, authorization: str | None):
        client = client_from_auth(authorization)
        try:
            live = engine.get_session(session_id)
        except CounselkitError:
            raise ApiException("not_found", "unknown resource")
        if live.state.client_id != client["client_id"]:
            raise ApiException("not_found", "unknown resource")
        return live

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/personas")
    def personas():
        return {
            "personas": [
                {"persona_id": p.persona_id, "display_name": p.display_name, "approach": p.approach}
                for p in engine.personas.values()
            ]
        }

    @app.post("/clients")
    def create_client(body: CreateClientBody):
        client = engine.create_client(body.display_name)
        return {"client_id": client["client_id"], "token": client["token"]}

    @app.post("/sessions")
    def open_session(body: OpenSessionBody, authorization: str | None = Header(default=None)):
        client = client_from_auth(authorization)
        if body.mode not in ("ca_plus", "baseline"):
            raise ApiException("bad_request", f"unknown mode {body.mode!r}")
        live = engine.open_session(client["client_id"], mode=body.mode, persona_id=body.persona_id)
        opening = live.transcript[0] if live.transcript else None
        return {
            **live.state.summary(),
            "opening_message": opening.text if opening else None,
            "recap": live.opened_with_recap,
        }

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody,
                     authorization: str | None = Header(default=None)):
        owned_session(session_id, authorization)
        result = engine.handle_message(session_id, body.text)
        return result.to_dict()

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str, body: dict[str, Any] = Body(default={}),
                      authorization: str | None = Header(default=None)):
        owned_session(session_id, authorization)
        return engine.close_session(session_id, reason=body.get("reason", "client_request"))

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str, authorization: str | None = Header(default=None)):
        owned_session(session_id, authorization)
        return {
            "messages": [
                {"role": m.role, "text": m.text, "ts": m.ts}
                for m in engine.transcript(session_id)
            ]
        }

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str, authorization: str | None = Header(default=None)):
        owned_session(session_id, authorization)
        return engine.session_metrics(session_id).to_dict()

    @app.get("/clients/{client_id}/profile")
    def profile(client_id: str, authorization: str | None = Header(default=None)):
        client = client_from_auth(authorization)
        if client["client_id"] != client_id:
            raise ApiException("not_found", "unknown resource")
        return engine.profile_bundle(client_id)

    @app.get("/clients/{client_id}/sessions")
    def sessions(client_id: str, authorization: str | None = Header(default=None)):
        client = client_from_auth(authorization)
        if client["client_id"] != client_id:
            raise ApiException("not_found", "unknown resource")
        summaries = []
        for session_id in engine.store.list_sessions(client_id):
            live = engine.get_session(session_id)
            summaries.append(live.state.summary())
        return {"sessions": summaries}

    @app.post("/admin/knowledge/ingest")
    async def admin_ingest(request: Request, authorization: str | None = Header(default=None)):
        token = (authorization or "").removeprefix("Bearer ").strip()
        if not admin_token or token != admin_token:
            raise ApiException("not_found", "unknown resource")
        text = (await request.body()).decode("utf-8")
        try:
            pack, dropped = KnowledgePack.load_text(text)
        except (ValueError, KeyError) as exc:
            raise ApiException("bad_request", f"invalid pack: {exc}")
        engine.install_pack(pack)
        return {"entry_count": len(pack.entries), "dropped_count": dropped}

    return app
