"""HTTP JSON API over the session store, consumed by the studio UI.

Endpoints mirror store operations one-to-one; errors use the same
``{"error": {"code", "message"}}`` schema as the generation wire protocol.
The service is also the single source of truth for prompt text via
``POST /prompt/preview``.
"""

from __future__ import annotations

import base64
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from ..core import CanonicalImage, DesignMetrics, ImageKind, palette_document
from ..errors import (
    BackendError,
    CorruptLogError,
    InvalidTransitionError,
    NetworkError,
    ProtocolError,
    PromptParseError,
    ValidationError,
)
from ..prompts import build_for_stage
from ..synth import synthetic_site
from .store import SessionStore


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def _parse_stage(raw):
    if raw in (1, 2, 3, "combined"):
        return raw
    if isinstance(raw, str) and raw in ("1", "2", "3"):
        return int(raw)
    raise ValidationError(f"stage must be 1, 2, 3 or 'combined', got {raw!r}")


def create_app(store: SessionStore, *, ui_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="urbanstudio workflow service", docs_url=None)

    @app.exception_handler(ValidationError)
    async def _validation(request, exc):
        return _error(400, "validation_error", str(exc))

    @app.exception_handler(PromptParseError)
    async def _parse_err(request, exc):
        return _error(400, "prompt_parse_error", str(exc))

    @app.exception_handler(InvalidTransitionError)
    async def _transition(request, exc):
        return _error(409, "invalid_transition", str(exc))

    @app.exception_handler(KeyError)
    async def _missing(request, exc):
        return _error(404, "not_found", str(exc.args[0]) if exc.args else "not found")

    @app.exception_handler(CorruptLogError)
    async def _corrupt(request, exc):
        return _error(500, "corrupt_log", str(exc))

    for exc_type, code in ((NetworkError, "network_error"),
                           (BackendError, "backend_error"),
                           (ProtocolError, "protocol_error")):
        def _make(code=code):
            async def handler(request, exc):
                return _error(502, code, str(exc))
            return handler
        app.add_exception_handler(exc_type, _make())

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ValidationError("request body is not valid JSON")
        if not isinstance(body, dict):
            raise ValidationError("request body must be a JSON object")
        return body

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(store.list_sessions())}

    @app.get("/palette")
    def palette():
        return palette_document()

    @app.post("/prompt/preview")
    async def prompt_preview(request: Request):
        body = await _json_body(request)
        stage = _parse_stage(body.get("stage"))
        city = body.get("city")
        if not isinstance(city, str):
            raise ValidationError("city must be a string")
        metrics = None
        if body.get("metrics") is not None:
            metrics = DesignMetrics.from_dict(body["metrics"])
        prompt = build_for_stage(stage, city, metrics)
        return {"stage": stage, "city": city, "prompt": prompt.text}

    @app.get("/demo/constraint")
    def demo_constraint(seed: int = 0, size: int = 512):
        if not (32 <= size <= 1024):
            raise ValidationError("size must be in [32, 1024]")
        image = synthetic_site(seed, size=size)
        return Response(content=image.to_png_bytes(), media_type="image/png")

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await _json_body(request)
        city = body.get("city")
        if not isinstance(city, str):
            raise ValidationError("city must be a string")
        b64 = body.get("constraint_png_b64")
        if not isinstance(b64, str):
            raise ValidationError("constraint_png_b64 must be a string")
        try:
            png = base64.b64decode(b64, validate=True)
            image = CanonicalImage.from_png_bytes(png, ImageKind.SITE_CONSTRAINTS)
        except ValidationError:
            raise
        except Exception as exc:
            raise ValidationError(f"constraint_png_b64 is not a decodable PNG: {exc}")
        backend = body.get("backend")
        session = store.create_session(city, image, backend)
        return session.to_view()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.get(session_id).to_view()

    @app.post("/sessions/{session_id}/targets")
    async def set_targets(session_id: str, request: Request):
        body = await _json_body(request)
        stage = _parse_stage(body.get("stage"))
        if stage == "combined":
            raise ValidationError("sessions use stages 1-3")
        metrics = None
        if body.get("metrics") is not None:
            metrics = DesignMetrics.from_dict(body["metrics"])
        return store.set_targets(session_id, stage, metrics).to_view()

    @app.post("/sessions/{session_id}/alternatives")
    async def request_alternatives(session_id: str, request: Request):
        body = await _json_body(request)
        n = body.get("n", 1)
        seed = body.get("seed", 0)
        if not isinstance(n, int) or isinstance(n, bool):
            raise ValidationError("n must be an integer")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ValidationError("seed must be an integer")
        return store.request_alternatives(session_id, n, seed).to_view()

    @app.post("/sessions/{session_id}/select")
    async def select_alternative(session_id: str, request: Request):
        body = await _json_body(request)
        index = body.get("index")
        if not isinstance(index, int) or isinstance(index, bool):
            raise ValidationError("index must be an integer")
        return store.select_alternative(session_id, index).to_view()

    @app.post("/sessions/{session_id}/revision")
    async def upload_revision(session_id: str, request: Request):
        data = await request.body()
        if not data:
            raise ValidationError("revision upload must carry PNG bytes")
        return store.upload_revision(session_id, data).to_view()

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str):
        return store.advance(session_id).to_view()

    @app.get("/sessions/{session_id}/images/{ref}")
    def get_image(session_id: str, ref: str):
        return Response(content=store.image_bytes(session_id, ref),
                        media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
