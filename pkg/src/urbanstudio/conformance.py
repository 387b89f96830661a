"""Shared wire-protocol conformance checks.

Run the same fixtures against any endpoint implementing the v1 generation
protocol: the built-in procedural service or a remote diffusion adapter.
"""

from __future__ import annotations

import base64

import requests

from .core import DesignMetrics
from .genbackend.client import encode_image_b64
from .prompts import build_stage1
from .synth import synthetic_site

_FIXTURE_METRICS = DesignMetrics(
    road_density=0.12,
    land_use=(0.5, 0.2, 0.1, 0.1, 0.1),
)


def _is_error_schema(body) -> bool:
    return (isinstance(body, dict) and isinstance(body.get("error"), dict)
            and isinstance(body["error"].get("code"), str)
            and isinstance(body["error"].get("message"), str))


def conformance_checks(endpoint: str, *, session: requests.Session | None = None,
                       timeout: float = 180.0) -> list[tuple[str, bool, str]]:
    """Run every protocol fixture; returns (name, passed, detail) triples."""
    if session is None:
        session = requests.Session()
    base = endpoint.rstrip("/")
    results: list[tuple[str, bool, str]] = []

    def check(name: str, passed: bool, detail: str = "") -> None:
        results.append((name, bool(passed), detail))

    # healthz schema
    resp = session.get(base + "/healthz", timeout=timeout)
    ok = resp.status_code == 200
    body = {}
    if ok:
        body = resp.json()
        ok = body.get("status") in ("ok", "degraded") \
            and isinstance(body.get("models"), list)
    check("healthz_schema", ok, f"status={resp.status_code} body={body}")

    constraint = synthetic_site(seed=11, size=128)
    prompt = build_stage1("Conformance City", _FIXTURE_METRICS).text
    good = {
        "stage": 1,
        "prompt": prompt,
        "constraint_png_b64": encode_image_b64(constraint),
        "num_samples": 2,
        "seed": 7,
    }

    # happy path: image count, seeds, model id, dimensions
    resp = session.post(base + "/v1/generate", json=good, timeout=timeout)
    ok = resp.status_code == 200
    detail = f"status={resp.status_code}"
    if ok:
        body = resp.json()
        images = body.get("images_png_b64")
        ok = (isinstance(images, list) and len(images) == 2
              and isinstance(body.get("model_id"), str)
              and isinstance(body.get("seeds"), list) and len(body["seeds"]) == 2)
        if ok:
            from .core import CanonicalImage, ImageKind
            for b64 in images:
                img = CanonicalImage.from_png_bytes(
                    base64.b64decode(b64), ImageKind.STAGE1_PLAN)
                if img.pixels.shape != constraint.pixels.shape:
                    ok = False
                    detail = f"dims {img.pixels.shape} != {constraint.pixels.shape}"
                    break
    check("generate_happy_path", ok, detail)

    def expect_client_error(name: str, payload: dict) -> None:
        resp = session.post(base + "/v1/generate", json=payload, timeout=timeout)
        ok = 400 <= resp.status_code < 500
        detail = f"status={resp.status_code}"
        if ok:
            try:
                ok = _is_error_schema(resp.json())
                detail += " error-schema" if ok else f" bad body {resp.text[:120]}"
            except ValueError:
                ok = False
                detail += f" non-JSON body {resp.text[:120]}"
        check(name, ok, detail)

    expect_client_error("invalid_stage_rejected", dict(good, stage=7))
    expect_client_error("bad_base64_rejected", dict(good, constraint_png_b64="@@not-b64@@"))
    expect_client_error("zero_samples_rejected", dict(good, num_samples=0))
    bad = dict(good)
    del bad["prompt"]
    expect_client_error("missing_prompt_rejected", bad)
    return results


def assert_conformance(endpoint: str, **kwargs) -> None:
    failures = [(n, d) for n, ok, d in conformance_checks(endpoint, **kwargs) if not ok]
    if failures:
        raise AssertionError("protocol conformance failures: " +
                             "; ".join(f"{n} ({d})" for n, d in failures))
