"""Serving endpoint: bit-level conformance with the v1 generation protocol,
plus POST /v1/features for canonical Frechet scoring.

One request is processed at a time (single in-process engine); health reports
"degraded" with an empty model list until a checkpoint is loaded.
"""

from __future__ import annotations

import base64
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import features as feature_mod
from .engine import load_engine

VALID_STAGES = (1, 2, 3, "combined")


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app(checkpoint_dir: Path | str | None = None,
               max_queue_depth: int = 8) -> FastAPI:
    app = FastAPI(title="diffusion adapter", docs_url=None)
    engine = load_engine(checkpoint_dir) if checkpoint_dir else None
    serve_lock = threading.Lock()
    pending = {"count": 0}
    pending_lock = threading.Lock()

    @app.get("/healthz")
    def healthz():
        if engine is None:
            return {"status": "degraded", "models": []}
        # One request runs at a time; a saturated queue degrades health.
        with pending_lock:
            saturated = pending["count"] > max_queue_depth
        status = "degraded" if saturated else "ok"
        return {"status": status, "models": [engine.model_id]}

    @app.post("/v1/generate")
    async def generate(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_json", "request body is not valid JSON")
        if not isinstance(body, dict):
            return _error(400, "bad_json", "request body must be an object")
        stage = body.get("stage")
        if stage not in VALID_STAGES:
            return _error(400, "bad_stage",
                          f"stage must be 1, 2, 3 or 'combined', got {stage!r}")
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            return _error(400, "bad_prompt", "prompt must be a nonempty string")
        b64 = body.get("constraint_png_b64")
        if not isinstance(b64, str):
            return _error(400, "bad_constraint", "constraint_png_b64 must be a string")
        num_samples = body.get("num_samples", 1)
        if not isinstance(num_samples, int) or isinstance(num_samples, bool) \
                or num_samples < 1:
            return _error(400, "bad_num_samples",
                          "num_samples must be a positive integer")
        seed = body.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            return _error(400, "bad_seed", "seed must be an integer")
        if engine is None:
            return _error(503, "no_model", "no checkpoint loaded")
        model_id = body.get("model_id")
        if model_id is not None and model_id != engine.model_id:
            return _error(400, "unknown_model",
                          f"this adapter serves {engine.model_id!r}")
        try:
            constraint_png = base64.b64decode(b64, validate=True)
            from PIL import Image
            import io
            Image.open(io.BytesIO(constraint_png)).verify()
        except Exception as exc:
            return _error(400, "bad_constraint",
                          f"constraint_png_b64 is not a decodable PNG: {exc}")
        with pending_lock:
            if pending["count"] > max_queue_depth:
                return _error(503, "queue_full", "generation queue is saturated")
            pending["count"] += 1
        try:
            with serve_lock:  # one request per engine at a time
                try:
                    images = engine.generate(constraint_png, prompt, num_samples,
                                             seed)
                except Exception as exc:
                    return _error(500, "generation_failed", str(exc))
        finally:
            with pending_lock:
                pending["count"] -= 1
        return {
            "images_png_b64": [base64.b64encode(i).decode("ascii") for i in images],
            "model_id": engine.model_id,
            "seeds": [seed + i for i in range(num_samples)],
        }

    @app.post("/v1/features")
    async def features(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_json", "request body is not valid JSON")
        images_b64 = body.get("images_png_b64") if isinstance(body, dict) else None
        if not isinstance(images_b64, list) or not images_b64:
            return _error(400, "bad_images",
                          "images_png_b64 must be a nonempty list")
        pngs = []
        for i, entry in enumerate(images_b64):
            try:
                pngs.append(base64.b64decode(entry, validate=True))
            except Exception:
                return _error(400, "bad_images", f"entry {i} is not base64")
        try:
            feats = feature_mod.extract_features(pngs)
        except Exception as exc:
            return _error(400, "bad_images", f"cannot decode images: {exc}")
        return {"features": feats.tolist(),
                "extractor": feature_mod.extractor_id(),
                "dim": feats.shape[1]}

    return app
