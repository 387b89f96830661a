"""Pooled InceptionV3 activations for canonical Frechet scoring.

Pretrained weights are loaded from the path in DIFFUSION_ADAPTER_INCEPTION
when set; otherwise the network is constructed with a fixed-seed random
initialization, which still yields a deterministic 2048-dim embedding and is
clearly labeled in the extractor id. Scores from the random-init extractor
are self-consistent but not comparable to published FID numbers.
"""

from __future__ import annotations

import io
import os
import threading

import numpy as np
import torch
import torchvision
from PIL import Image

FEATURE_DIM = 2048
WEIGHTS_ENV = "DIFFUSION_ADAPTER_INCEPTION"

_lock = threading.Lock()
_model = None
_extractor_id = None


def _build():
    global _model, _extractor_id
    weights_path = os.environ.get(WEIGHTS_ENV)
    torch.manual_seed(0)
    model = torchvision.models.inception_v3(weights=None, init_weights=True,
                                            aux_logits=True)
    if weights_path:
        state = torch.load(weights_path, map_location="cpu")
        model.load_state_dict(state)
        _extractor_id = "inception_v3"
    else:
        _extractor_id = "inception_v3-randominit"
    model.fc = torch.nn.Identity()
    model.eval()
    _model = model


def extractor_id() -> str:
    with _lock:
        if _model is None:
            _build()
        return _extractor_id


def extract_features(pngs: list[bytes]) -> np.ndarray:
    """(n, 2048) pooled activations of PNG-encoded images."""
    with _lock:
        if _model is None:
            _build()
        tensors = []
        for data in pngs:
            img = Image.open(io.BytesIO(data)).convert("RGB").resize(
                (299, 299), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
            tensors.append(torch.from_numpy((arr - 0.5) / 0.5).permute(2, 0, 1))
        batch = torch.stack(tensors)
        with torch.no_grad():
            feats = _model(batch)
        return feats.numpy().astype(np.float64)
