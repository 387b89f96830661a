import json
import socket
import threading
import time

import pytest
import uvicorn

from urbanstudio.core import classify_image
from urbanstudio.metrics import jenks_breaks, metrics_from_raster, metrics_from_vector
from urbanstudio.prompts import build_stage1
from urbanstudio.rasterizer import RenderSpec, render_site_constraints, render_stage1
from urbanstudio.synth import synthetic_bundle

from diffusion_adapter.train import TrainConfig, train


class ServerThread:
    def __init__(self, app):
        with socket.socket() as sock:
            sock.bind(("127.0.0.1", 0))
            self.port = sock.getsockname()[1]
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        for _ in range(200):
            if self.server.started:
                return f"http://127.0.0.1:{self.port}"
            time.sleep(0.05)
        raise RuntimeError("server did not start")

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


def write_toy_manifest(root, n_rows=8, size=64):
    """Stage-1 triples rendered by the primary pipeline at toy scale."""
    root.mkdir(parents=True, exist_ok=True)
    spec = RenderSpec(image_size=size)
    rows = []
    for i in range(n_rows):
        bundle = synthetic_bundle(seed=100 + i)
        site = render_site_constraints(bundle, spec)
        plan = render_stage1(bundle, spec)
        heights = [h for _, h in bundle.buildings if h is not None]
        breaks = jenks_breaks(heights, 3)
        metrics = metrics_from_vector(bundle, breaks, spec=spec).metrics
        prompt = build_stage1("Toyville", metrics).text
        site_path = root / f"site{i}.png"
        plan_path = root / f"plan{i}.png"
        site_path.write_bytes(site.to_png_bytes())
        plan_path.write_bytes(plan.to_png_bytes())
        rows.append({"constraint": site_path.name, "target": plan_path.name,
                     "prompt": prompt, "stage": 1})
    manifest = root / "stage1.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return manifest


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    return write_toy_manifest(tmp_path_factory.mktemp("manifest"))


@pytest.fixture(scope="session")
def smoke_checkpoint(tmp_path_factory, toy_manifest):
    out = tmp_path_factory.mktemp("ckpt")
    config = TrainConfig(stage=1, manifest=toy_manifest, checkpoint_dir=out,
                         steps=10, image_size=64)
    result = train(config)
    return result.checkpoint_dir
