"""Training manifest loading: JSON-lines of (constraint, target, prompt) rows."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

VALID_STAGES = (1, 2, 3, "combined")


class ManifestError(ValueError):
    """A manifest row is malformed; the message names the row index."""


@dataclass(frozen=True)
class ManifestRow:
    constraint: Path
    target: Path
    prompt: str
    stage: int | str


def load_manifest(path: Path | str) -> list[ManifestRow]:
    """Parse and validate a JSONL manifest, failing fast with the row index."""
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    with open(path) as f:
        for index, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"row {index}: not valid JSON ({exc})") from exc
            for key in ("constraint", "target", "prompt", "stage"):
                if key not in doc:
                    raise ManifestError(f"row {index}: missing key {key!r}")
            if doc["stage"] not in VALID_STAGES:
                raise ManifestError(f"row {index}: bad stage {doc['stage']!r}")
            constraint = base / doc["constraint"]
            target = base / doc["target"]
            for name, p in (("constraint", constraint), ("target", target)):
                if not p.exists():
                    raise ManifestError(f"row {index}: {name} image {p} is missing")
            rows.append(ManifestRow(constraint=constraint, target=target,
                                    prompt=str(doc["prompt"]), stage=doc["stage"]))
    if not rows:
        raise ManifestError("manifest has no rows")
    return rows


def load_image_tensor(path: Path, size: int) -> torch.Tensor:
    """PNG -> float tensor in [0, 1], shape (3, size, size)."""
    img = Image.open(path).convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1)


def prompt_embedding(prompt: str, dim: int = 8) -> torch.Tensor:
    """Deterministic pseudo-embedding of a prompt string.

    A stand-in conditioning signal for the tiny engine; real text conditioning
    belongs to the upstream diffusion pipeline.
    """
    digest = hashlib.sha256(prompt.encode()).digest()
    vals = np.frombuffer(digest[: dim * 4], dtype=np.uint32).astype(np.float32)
    return torch.from_numpy(vals / np.float32(2 ** 32) - 0.5)
