import base64

import pytest
import requests

from conftest import ServerThread
from urbanstudio.conformance import assert_conformance
from urbanstudio.genbackend import GenerationRequest, generate_remote, health
from urbanstudio.genbackend.client import encode_image_b64
from urbanstudio.prompts import build_stage1
from urbanstudio.core import DesignMetrics
from urbanstudio.synth import synthetic_site

from diffusion_adapter.server import create_app

PROMPT = build_stage1("Toyville", DesignMetrics(
    road_density=0.15, land_use=(0.6, 0.2, 0.1, 0.1, 0.0))).text


@pytest.fixture(scope="module")
def adapter_url(smoke_checkpoint):
    with ServerThread(create_app(smoke_checkpoint)) as url:
        yield url


class TestProtocolConformance:
    def test_shared_conformance_fixtures_pass(self, adapter_url):
        # The same suite the primary runs against its procedural service.
        assert_conformance(adapter_url)

    def test_healthz_ok_with_model(self, adapter_url):
        status = health(adapter_url)
        assert status.ok and status.models == ("tiny-unet",)

    def test_primary_client_round_trip(self, adapter_url):
        site = synthetic_site(seed=8, size=96)
        request = GenerationRequest(stage=1, constraint=site, prompt=PROMPT,
                                    num_samples=2, seed=11)
        result = generate_remote(request, adapter_url)
        assert len(result.images) == 2
        assert result.model_id == "tiny-unet"
        assert result.images[0].pixels.shape == site.pixels.shape

    def test_fixed_seed_reproducible_pair(self, adapter_url):
        site = synthetic_site(seed=9, size=64)
        request = GenerationRequest(stage=1, constraint=site, prompt=PROMPT,
                                    num_samples=2, seed=21)
        a = generate_remote(request, adapter_url)
        b = generate_remote(request, adapter_url)
        for x, y in zip(a.images, b.images):
            assert (x.pixels == y.pixels).all()

    def test_unknown_model_rejected(self, adapter_url):
        site = synthetic_site(seed=9, size=64)
        resp = requests.post(adapter_url + "/v1/generate", json={
            "stage": 1, "prompt": PROMPT,
            "constraint_png_b64": encode_image_b64(site),
            "model_id": "some-other-model"}, timeout=30)
        assert resp.status_code == 400
        assert resp.json()["error"]["code"] == "unknown_model"


@pytest.fixture(scope="module")
def bare_url():
    with ServerThread(create_app(None)) as url:
        yield url


class TestDegradedWithoutCheckpoint:
    def test_healthz_degraded(self, bare_url):
        status = health(bare_url)
        assert status.status == "degraded" and status.models == ()

    def test_generate_returns_error_schema(self, bare_url):
        site = synthetic_site(seed=1, size=64)
        resp = requests.post(bare_url + "/v1/generate", json={
            "stage": 1, "prompt": PROMPT,
            "constraint_png_b64": encode_image_b64(site)}, timeout=30)
        assert resp.status_code == 503
        body = resp.json()
        assert body["error"]["code"] == "no_model"
