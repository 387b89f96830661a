import socket
import threading
import time

import pytest
import uvicorn

from urbanstudio.metrics import jenks_breaks
from urbanstudio.rasterizer import RenderSpec
from urbanstudio.synth import synthetic_bundle


class ServerThread:
    """Run an ASGI app on a free localhost port in a background thread."""

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


@pytest.fixture(scope="session")
def bundle0():
    return synthetic_bundle(0)


@pytest.fixture(scope="session")
def breaks0(bundle0):
    heights = [h for _, h in bundle0.buildings if h is not None]
    return jenks_breaks(heights, 3)


@pytest.fixture(scope="session")
def spec512():
    return RenderSpec()


@pytest.fixture(scope="session")
def spec256():
    return RenderSpec(image_size=256)
