"""HTTP client for the v1 generation wire protocol (JSON + base64 PNG)."""

from __future__ import annotations

import base64
import threading

import requests

from ..core import CanonicalImage, OUTPUT_KIND_FOR_STAGE
from ..errors import BackendError, BackendTimeoutError, NetworkError, ProtocolError
from .types import GenerationRequest, GenerationResult, HealthStatus

_inflight_lock = threading.Lock()
_inflight = threading.BoundedSemaphore(8)


def configure_inflight_limit(n: int) -> None:
    """Cap concurrent generate calls across threads (default 8)."""
    global _inflight
    if n < 1:
        raise ValueError("in-flight limit must be >= 1")
    with _inflight_lock:
        _inflight = threading.BoundedSemaphore(n)


def encode_image_b64(image: CanonicalImage) -> str:
    return base64.b64encode(image.to_png_bytes()).decode("ascii")


def _post_json(session: requests.Session, url: str, payload: dict, timeout: float):
    try:
        return session.post(url, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise BackendTimeoutError(f"timed out after {timeout}s calling {url}") from exc
    except requests.RequestException as exc:
        raise NetworkError(f"cannot reach {url}: {exc}") from exc


def generate_remote(request: GenerationRequest, endpoint: str, *,
                    session: requests.Session | None = None) -> GenerationResult:
    """POST the request to an adapter endpoint and validate the response.

    The request is validated client-side before any network call. Schema
    violations (wrong image count, bad dimensions, missing fields) raise
    ProtocolError; non-2xx statuses raise BackendError with a body excerpt.
    """
    request.validate()
    if session is None:
        session = requests.Session()
    payload = {
        "stage": request.stage,
        "prompt": request.prompt,
        "constraint_png_b64": encode_image_b64(request.constraint),
        "num_samples": request.num_samples,
        "seed": request.seed,
    }
    if request.model_id is not None:
        payload["model_id"] = request.model_id
    if request.sampler_overrides:
        payload["sampler_overrides"] = request.sampler_overrides

    url = endpoint.rstrip("/") + "/v1/generate"
    with _inflight:
        resp = _post_json(session, url, payload, request.timeout)
    if resp.status_code < 200 or resp.status_code >= 300:
        raise BackendError(f"backend returned HTTP {resp.status_code}",
                           status=resp.status_code, body=resp.text)
    try:
        body = resp.json()
    except ValueError as exc:
        raise ProtocolError(f"response is not JSON: {exc}") from exc

    images_b64 = body.get("images_png_b64")
    seeds = body.get("seeds")
    model_id = body.get("model_id")
    if not isinstance(images_b64, list) or len(images_b64) != request.num_samples:
        got = len(images_b64) if isinstance(images_b64, list) else type(images_b64)
        raise ProtocolError(
            f"expected {request.num_samples} images_png_b64 entries, got {got}")
    if not isinstance(seeds, list) or len(seeds) != request.num_samples:
        raise ProtocolError("seeds missing or wrong length")
    if not isinstance(model_id, str) or not model_id:
        raise ProtocolError("model_id missing")

    kind = OUTPUT_KIND_FOR_STAGE[request.stage]
    images, metadata = [], []
    for i, (b64, seed) in enumerate(zip(images_b64, seeds)):
        try:
            data = base64.b64decode(b64, validate=True)
            image = CanonicalImage.from_png_bytes(data, kind,
                                                  tile_id=request.constraint.tile_id)
        except Exception as exc:
            raise ProtocolError(f"image {i} is not a decodable PNG: {exc}") from exc
        if image.pixels.shape != request.constraint.pixels.shape:
            raise ProtocolError(
                f"image {i} has shape {image.pixels.shape[:2]}, expected "
                f"{request.constraint.pixels.shape[:2]}")
        images.append(image)
        metadata.append({"model_id": model_id, "seed": seed})
    return GenerationResult(images=images, metadata=metadata, model_id=model_id)


def health(endpoint: str, *, session: requests.Session | None = None,
           timeout: float = 10.0) -> HealthStatus:
    """GET /healthz; returns the adapter status and available model ids."""
    if session is None:
        session = requests.Session()
    url = endpoint.rstrip("/") + "/healthz"
    try:
        resp = session.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise NetworkError(f"cannot reach {url}: {exc}") from exc
    if resp.status_code != 200:
        raise BackendError(f"healthz returned HTTP {resp.status_code}",
                           status=resp.status_code, body=resp.text)
    try:
        body = resp.json()
    except ValueError as exc:
        raise ProtocolError(f"healthz response is not JSON: {exc}") from exc
    status = body.get("status")
    models = body.get("models")
    if status not in ("ok", "degraded") or not isinstance(models, list):
        raise ProtocolError(f"malformed healthz body: {body!r}")
    return HealthStatus(status=status, models=tuple(str(m) for m in models))
