"""Train and serve commands."""

from __future__ import annotations

from pathlib import Path

import click

from .train import TrainConfig, train


@click.group()
def main():
    """Diffusion adapter: wire-protocol backend for the urbanstudio pipeline."""


@main.command("train")
@click.option("--stage", default="1", show_default=True)
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "checkpoint_dir", required=True, type=click.Path())
@click.option("--steps", default=10, show_default=True, type=int)
@click.option("--batch-size", default=2, show_default=True, type=int)
@click.option("--learning-rate", default=1e-5, show_default=True, type=float)
@click.option("--sd-locked/--no-sd-locked", default=False, show_default=True)
@click.option("--image-size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def train_cmd(stage, manifest, checkpoint_dir, steps, batch_size, learning_rate,
              sd_locked, image_size, seed):
    """Run training (smoke scale by default: a few steps on a toy manifest)."""
    stage = stage if stage == "combined" else int(stage)
    config = TrainConfig(stage=stage, manifest=Path(manifest),
                         checkpoint_dir=Path(checkpoint_dir),
                         sd_locked=sd_locked, learning_rate=learning_rate,
                         batch_size=batch_size, steps=steps,
                         image_size=image_size, seed=seed)
    result = train(config)
    click.echo(f"checkpoint written to {result.checkpoint_dir} "
               f"(final loss {result.final_loss:.6f})")


@main.command("serve")
@click.option("--checkpoint", "checkpoint_dir", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8001, show_default=True, type=int)
def serve_cmd(checkpoint_dir, host, port):
    """Serve /v1/generate, /healthz and /v1/features."""
    import uvicorn

    from .server import create_app
    uvicorn.run(create_app(checkpoint_dir), host=host, port=port,
                log_level="warning")


if __name__ == "__main__":
    main()
