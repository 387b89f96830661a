"""Fine-tuning entry point over primary-pipeline manifests.

The tiny engine trains end to end here and doubles as the smoke path that
validates data plumbing (a handful of steps on a toy manifest). Full-scale
ControlNet training (SD_locked, ~105 GPU hours per stage) is delegated to
upstream tooling and is documented, not run, at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .data import ManifestRow, load_image_tensor, load_manifest, prompt_embedding
from .engine import TinyUNet


@dataclass
class TrainConfig:
    stage: int | str
    manifest: Path
    checkpoint_dir: Path
    sd_locked: bool = False
    learning_rate: float = 1e-5
    batch_size: int = 2
    steps: int = 10
    image_size: int = 64
    seed: int = 0
    model_id: str = "tiny-unet"

    def __post_init__(self):
        if self.stage not in (1, 2, 3, "combined"):
            raise ValueError(f"stage must be 1, 2, 3 or 'combined', got {self.stage}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class TrainResult:
    checkpoint_dir: Path
    losses: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def _batches(rows: list[ManifestRow], config: TrainConfig):
    generator = torch.Generator().manual_seed(config.seed)
    while True:
        order = torch.randperm(len(rows), generator=generator).tolist()
        for start in range(0, len(order), config.batch_size):
            chunk = [rows[i] for i in order[start:start + config.batch_size]]
            constraints = torch.stack([
                load_image_tensor(r.constraint, config.image_size) for r in chunk])
            targets = torch.stack([
                load_image_tensor(r.target, config.image_size) for r in chunk])
            embeddings = torch.stack([prompt_embedding(r.prompt) for r in chunk])
            yield constraints, targets, embeddings


def train(config: TrainConfig) -> TrainResult:
    """Train the tiny engine; writes model.pt + config.json to checkpoint_dir."""
    rows = [r for r in load_manifest(config.manifest) if r.stage == config.stage]
    if not rows:
        raise ValueError(f"manifest has no rows for stage {config.stage}")
    torch.manual_seed(config.seed)
    model = TinyUNet()
    # sd_locked=False trains every layer; True freezes the decoder half, the
    # tiny-engine analogue of keeping pretrained decoding layers fixed.
    params = model.parameters() if not config.sd_locked \
        else model.encode.parameters()
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    losses = []
    batches = _batches(rows, config)
    for _step in range(config.steps):
        constraints, targets, embeddings = next(batches)
        optimizer.zero_grad()
        out = model(constraints, embeddings)
        loss = torch.nn.functional.mse_loss(out, targets)
        loss.backward()
        optimizer.step()
        value = float(loss.detach())
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged: loss {value} at step {_step}")
        losses.append(value)

    checkpoint_dir = Path(config.checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), checkpoint_dir / "model.pt")
    (checkpoint_dir / "config.json").write_text(json.dumps({
        "engine": "tiny",
        "model_id": config.model_id,
        "stage": config.stage,
        "image_size": config.image_size,
        "sd_locked": config.sd_locked,
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "steps": config.steps,
        "final_loss": losses[-1],
    }, indent=1))
    return TrainResult(checkpoint_dir=checkpoint_dir, losses=losses)
