"""Wire-protocol service exposing the procedural backend over HTTP.

Request/response bodies follow the v1 generation protocol exactly, including
the error schema, so the same conformance fixtures run against this service
and against remote adapters.
"""

from __future__ import annotations

import base64

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..core import CONSTRAINT_KIND_FOR_STAGE, CanonicalImage
from ..errors import PromptParseError, ValidationError
from .procedural import generate_procedural
from .types import GenerationRequest, PROCEDURAL_MODEL_ID


def error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "message": message}})


def create_app() -> FastAPI:
    app = FastAPI(title="urbanstudio procedural backend", docs_url=None)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": [PROCEDURAL_MODEL_ID]}

    @app.post("/v1/generate")
    async def generate(request: Request):
        try:
            body = await request.json()
        except Exception:
            return error_response(400, "bad_json", "request body is not valid JSON")
        if not isinstance(body, dict):
            return error_response(400, "bad_json", "request body must be an object")

        stage = body.get("stage")
        if stage not in CONSTRAINT_KIND_FOR_STAGE:
            return error_response(400, "bad_stage",
                                  f"stage must be 1, 2, 3 or 'combined', got {stage!r}")
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            return error_response(400, "bad_prompt", "prompt must be a nonempty string")
        b64 = body.get("constraint_png_b64")
        if not isinstance(b64, str):
            return error_response(400, "bad_constraint",
                                  "constraint_png_b64 must be a string")
        num_samples = body.get("num_samples", 1)
        if not isinstance(num_samples, int) or isinstance(num_samples, bool) \
                or num_samples < 1:
            return error_response(400, "bad_num_samples",
                                  "num_samples must be a positive integer")
        seed = body.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            return error_response(400, "bad_seed", "seed must be an integer")
        model_id = body.get("model_id")
        if model_id is not None and model_id != PROCEDURAL_MODEL_ID:
            return error_response(400, "unknown_model",
                                  f"only {PROCEDURAL_MODEL_ID} is served here")
        try:
            data = base64.b64decode(b64, validate=True)
            constraint = CanonicalImage.from_png_bytes(
                data, CONSTRAINT_KIND_FOR_STAGE[stage])
        except Exception as exc:
            return error_response(400, "bad_constraint",
                                  f"constraint_png_b64 is not a decodable PNG: {exc}")

        gen_request = GenerationRequest(
            stage=stage, constraint=constraint, prompt=prompt,
            num_samples=num_samples, seed=seed,
            sampler_overrides=body.get("sampler_overrides"))
        try:
            result = generate_procedural(gen_request)
        except PromptParseError as exc:
            return error_response(422, "prompt_parse_error", str(exc))
        except ValidationError as exc:
            return error_response(400, "validation_error", str(exc))

        return {
            "images_png_b64": [base64.b64encode(img.to_png_bytes()).decode("ascii")
                               for img in result.images],
            "model_id": result.model_id,
            "seeds": result.seeds,
            "infeasible": [m.get("infeasible", False) for m in result.metadata],
        }

    return app
