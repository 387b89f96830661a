"""Generation engines behind the serving endpoint.

TinyUNetEngine is the desk-scale engine trained by train.py; it validates the
full data and protocol path. ControlNetEngine delegates to upstream diffusers
tooling when the optional extra is installed and a real checkpoint is given.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import load_image_tensor, prompt_embedding

EMBED_DIM = 8


class TinyUNet(torch.nn.Module):
    """Small conv encoder-decoder conditioned on a prompt embedding."""

    def __init__(self, embed_dim: int = EMBED_DIM, width: int = 32):
        super().__init__()
        self.encode = torch.nn.Sequential(
            torch.nn.Conv2d(3 + embed_dim, width, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, width, 3, padding=1, stride=2),
            torch.nn.ReLU(),
        )
        self.decode = torch.nn.Sequential(
            torch.nn.ConvTranspose2d(width, width, 4, stride=2, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, 3, 3, padding=1),
            torch.nn.Sigmoid(),
        )

    def forward(self, image: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        b, _, h, w = image.shape
        cond = embedding.view(b, -1, 1, 1).expand(b, embedding.shape[-1], h, w)
        return self.decode(self.encode(torch.cat([image, cond], dim=1)))


class TinyUNetEngine:
    def __init__(self, checkpoint_dir: Path, config: dict):
        self.config = config
        self.image_size = int(config.get("image_size", 64))
        self.model = TinyUNet()
        state = torch.load(Path(checkpoint_dir) / "model.pt", map_location="cpu")
        self.model.load_state_dict(state)
        self.model.eval()

    @property
    def model_id(self) -> str:
        return str(self.config.get("model_id", "tiny-unet"))

    def generate(self, constraint_png: bytes, prompt: str, num_samples: int,
                 seed: int) -> list[bytes]:
        source = Image.open(io.BytesIO(constraint_png)).convert("RGB")
        out_size = source.size
        small = source.resize((self.image_size, self.image_size), Image.BILINEAR)
        base = torch.from_numpy(
            np.asarray(small, dtype=np.float32) / 255.0).permute(2, 0, 1)
        embedding = prompt_embedding(prompt)
        images = []
        with torch.no_grad():
            for i in range(num_samples):
                gen = torch.Generator().manual_seed((seed + i) & 0x7FFFFFFF)
                noisy = base + 0.05 * torch.randn(base.shape, generator=gen)
                out = self.model(noisy.unsqueeze(0), embedding.unsqueeze(0))[0]
                arr = (out.permute(1, 2, 0).numpy() * 255.0).clip(0, 255)
                img = Image.fromarray(arr.astype(np.uint8)).resize(
                    out_size, Image.BILINEAR)
                buf = io.BytesIO()
                img.save(buf, format="PNG")
                images.append(buf.getvalue())
        return images


class ControlNetEngine:
    """Upstream ControlNet/Stable Diffusion serving (optional extra).

    Requires the 'controlnet' extra and a diffusers-format checkpoint; not
    exercised by the desk-scale test suite.
    """

    def __init__(self, checkpoint_dir: Path, config: dict):
        try:
            from diffusers import (ControlNetModel,
                                   StableDiffusionControlNetPipeline)
        except ImportError as exc:
            raise RuntimeError(
                "ControlNet serving needs the 'controlnet' extra "
                "(pip install diffusion-adapter[controlnet])") from exc
        self.config = config
        controlnet = ControlNetModel.from_pretrained(
            str(Path(checkpoint_dir) / "controlnet"))
        self.pipe = StableDiffusionControlNetPipeline.from_pretrained(
            config.get("base_model", "runwayml/stable-diffusion-v1-5"),
            controlnet=controlnet)
        self.pipe.to(config.get("device", "cpu"))

    @property
    def model_id(self) -> str:
        return str(self.config.get("model_id", "controlnet"))

    def generate(self, constraint_png: bytes, prompt: str, num_samples: int,
                 seed: int) -> list[bytes]:
        source = Image.open(io.BytesIO(constraint_png)).convert("RGB")
        images = []
        for i in range(num_samples):
            gen = torch.Generator().manual_seed((seed + i) & 0x7FFFFFFF)
            result = self.pipe(prompt, image=source, generator=gen,
                               num_inference_steps=int(
                                   self.config.get("steps", 20)))
            img = result.images[0].resize(source.size, Image.BILINEAR)
            buf = io.BytesIO()
            img.save(buf, format="PNG")
            images.append(buf.getvalue())
        return images


def load_engine(checkpoint_dir: Path | str):
    checkpoint_dir = Path(checkpoint_dir)
    config_path = checkpoint_dir / "config.json"
    if not config_path.exists():
        raise FileNotFoundError(f"no config.json in checkpoint {checkpoint_dir}")
    config = json.loads(config_path.read_text())
    engine = config.get("engine", "tiny")
    if engine == "tiny":
        return TinyUNetEngine(checkpoint_dir, config)
    if engine == "controlnet":
        return ControlNetEngine(checkpoint_dir, config)
    raise ValueError(f"unknown engine {engine!r} in checkpoint config")
