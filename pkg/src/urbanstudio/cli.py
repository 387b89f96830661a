"""Batch command-line entry points over the pipeline.

One binary with subcommands; a single JSON config file describes a city
profile (layer paths, CRS, mappings, tile source). Environment variables are
used only for secrets (tile-source API keys). Exit codes: 0 success,
2 config, 3 validation, 4 network, 5 protocol/backend, 1 unexpected.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from . import __version__
from .core import CanonicalImage, DesignMetrics, ImageKind, palette_document
from .errors import (
    BackendError,
    ConfigError,
    NetworkError,
    PromptParseError,
    ProtocolError,
    UrbanStudioError,
    ValidationError,
)
from .genbackend.client import generate_remote
from .genbackend.procedural import generate_procedural
from .genbackend.types import GenerationRequest
from .metrics import JenksBreaks, jenks_breaks, metrics_from_raster, metrics_from_vector
from .prompts import build_for_stage
from .rasterizer import (
    RenderSpec,
    TileSource,
    fetch_satellite,
    render_site_constraints,
    render_stage1,
    render_stage2,
)
from .tiler import TileSet, augment, clip, load_city_layers, partition, split
from . import evaluator
from .core import classify_image

EXIT_CODES = {
    "config": 2,
    "validation": 3,
    "network": 4,
    "backend": 5,
}

_CONFIG_KEYS = {
    "city", "crs", "layers", "land_use_attribute", "land_use_mapping",
    "height_attribute", "highway_attribute", "major_road_tags",
    "cache_dir", "tile_source", "backend_endpoint",
}


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    unknown = set(config) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = path.parent
    for role, layer_path in config.get("layers", {}).items():
        if not (base / layer_path).exists():
            raise ConfigError(f"layer {role!r} file {layer_path} does not exist")
    config["_base_dir"] = str(base)
    return config


_LAYER_CONFIG_KEYS = {"crs", "layers", "land_use_attribute", "land_use_mapping",
                      "height_attribute", "highway_attribute", "major_road_tags"}


def _layers_config(config: dict) -> dict:
    return {k: v for k, v in config.items() if k in _LAYER_CONFIG_KEYS}


def _fail(exc: UrbanStudioError) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, ConfigError):
        sys.exit(EXIT_CODES["config"])
    if isinstance(exc, (ValidationError, PromptParseError)):
        sys.exit(EXIT_CODES["validation"])
    if isinstance(exc, NetworkError):
        sys.exit(EXIT_CODES["network"])
    if isinstance(exc, (ProtocolError, BackendError)):
        sys.exit(EXIT_CODES["backend"])
    sys.exit(1)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UrbanStudioError as exc:
            _fail(exc)
    return wrapper


@click.group()
@click.version_option(__version__)
def main():
    """Stepwise urban-design pipeline."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@handle_errors
def ingest(config_path, as_json):
    """Validate a city config and report per-layer feature counts."""
    config = load_config(config_path)
    layers = load_city_layers(_layers_config(config), config["_base_dir"])
    summary = {
        "city": config.get("city", ""),
        "crs": layers.crs,
        "counts": {
            "water": len(layers.water),
            "railways": len(layers.railways),
            "major_roads": len(layers.major_roads),
            "minor_roads": len(layers.minor_roads),
            "land_use": len(layers.land_use),
            "buildings": len(layers.buildings),
        },
        "buildings_with_height": sum(1 for _, h in layers.buildings if h is not None),
    }
    if as_json:
        click.echo(json.dumps(summary, sort_keys=True))
    else:
        click.echo(f"city: {summary['city']} crs: {summary['crs']}")
        for name, count in summary["counts"].items():
            click.echo(f"  {name}: {count}")


@main.command()
@click.option("--extent", required=True,
              help="minx,miny,maxx,maxy in projected meters.")
@click.option("--cell-size", default=450.0, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--test-ratio", default=0.10, show_default=True)
@click.option("--shift-mode", default="diagonal", show_default=True,
              type=click.Choice(["diagonal", "grid9"]))
@click.option("--crs", default="EPSG:3857", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def tile(extent, cell_size, seed, test_ratio, shift_mode, crs, out_path):
    """Partition, augment and split an extent; write the tileset manifest."""
    try:
        bounds = tuple(float(v) for v in extent.split(","))
    except ValueError:
        raise ValidationError(f"cannot parse extent {extent!r}")
    if len(bounds) != 4:
        raise ValidationError("extent needs exactly 4 numbers")
    base = partition(bounds, cell_size)
    cells = augment(base, bounds, mode=shift_mode)
    tileset = split(cells, test_ratio=test_ratio, seed=seed,
                    extent=bounds, crs=crs, shift_mode=shift_mode)
    Path(out_path).write_text(tileset.manifest_json())
    counts = {label: sum(1 for c in tileset.cells if tileset.labels[c.id] == label)
              for label in ("train", "test", "excluded")}
    click.echo(f"wrote {out_path}: {len(tileset.cells)} cells "
               f"(train {counts['train']}, test {counts['test']}, "
               f"excluded {counts['excluded']})")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--kinds", default="site,stage1,stage2", show_default=True,
              help="Comma list from site,stage1,stage2,satellite.")
@click.option("--size", default=512, show_default=True, type=int)
@click.option("--labels", default="train,test", show_default=True,
              help="Only render cells with these split labels.")
@handle_errors
def render(config_path, manifest_path, out_dir, kinds, size, labels):
    """Render canonical images per tile and emit training manifests."""
    config = load_config(config_path)
    city = config.get("city", "city")
    layers = load_city_layers(_layers_config(config), config["_base_dir"])
    tileset = TileSet.from_manifest(json.loads(Path(manifest_path).read_text()))
    wanted = set(kinds.split(","))
    bad = wanted - {"site", "stage1", "stage2", "satellite"}
    if bad:
        raise ValidationError(f"unknown kinds: {sorted(bad)}")
    keep = set(labels.split(","))
    spec = RenderSpec(image_size=size)

    heights = [h for _, h in layers.buildings if h is not None]
    breaks = jenks_breaks(heights, 3, city=city) if len(set(heights)) >= 3 else None

    out = Path(out_dir)
    city_dir = out / city
    city_dir.mkdir(parents=True, exist_ok=True)
    rows = {1: [], 2: [], 3: []}
    source = None
    if "satellite" in wanted:
        ts = config.get("tile_source")
        if not ts:
            raise ConfigError("satellite requested but config has no tile_source")
        source = TileSource(url_template=ts["url_template"],
                            zoom=int(ts.get("zoom", 17)),
                            api_key_env=ts.get("api_key_env"))

    if "stage2" in wanted and breaks is None:
        raise ValidationError("stage2 requested but city has fewer than 3 "
                              "distinct building heights")

    def render_cell(cell):
        bundle = clip(cell, layers, crs=tileset.crs or None)
        paths = {}
        images = {}
        if "site" in wanted:
            images["site"] = render_site_constraints(bundle, spec)
        if "stage1" in wanted:
            images["stage1"] = render_stage1(bundle, spec)
        if "stage2" in wanted:
            images["stage2"] = render_stage2(bundle, spec, breaks)
        if source is not None:
            images["satellite"] = fetch_satellite(
                cell, source, cache_dir=config.get("cache_dir", out / "tile_cache"),
                crs=tileset.crs, image_size=size)
        for short, image in images.items():
            path = city_dir / f"{cell.id}_{image.kind.value}.png"
            path.write_bytes(image.to_png_bytes())
            paths[short] = str(path.relative_to(out))
        report = metrics_from_vector(bundle, breaks, spec=spec)
        cell_rows = {1: None, 2: None, 3: None}
        if {"site", "stage1"} <= set(paths):
            cell_rows[1] = {"constraint": paths["site"], "target": paths["stage1"],
                            "prompt": build_for_stage(1, city, report.metrics).text,
                            "stage": 1}
        if {"stage1", "stage2"} <= set(paths):
            cell_rows[2] = {"constraint": paths["stage1"], "target": paths["stage2"],
                            "prompt": build_for_stage(2, city, report.metrics).text,
                            "stage": 2}
        if {"stage2", "satellite"} <= set(paths):
            cell_rows[3] = {"constraint": paths["stage2"],
                            "target": paths["satellite"],
                            "prompt": build_for_stage(3, city, None).text,
                            "stage": 3}
        return cell_rows

    # Tiles render in parallel; executor.map preserves input order so the
    # emitted manifests stay deterministic.
    from concurrent.futures import ThreadPoolExecutor
    to_render = [c for c in tileset.cells if tileset.labels[c.id] in keep]
    rendered = 0
    with ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1)) as pool:
        for cell_rows in pool.map(render_cell, to_render):
            for stage, row in cell_rows.items():
                if row is not None:
                    rows[stage].append(row)
            rendered += 1

    for stage, stage_rows in rows.items():
        if stage_rows:
            manifest = out / f"{city}_stage{stage}.jsonl"
            manifest.write_text("".join(json.dumps(r, sort_keys=True) + "\n"
                                        for r in stage_rows))
    dataset = {
        "city": city,
        "seed": tileset.seed,
        "cells_rendered": rendered,
        "jenks_breaks": breaks.to_dict() if breaks else None,
        "palette": palette_document(),
    }
    (out / f"{city}_dataset.json").write_text(json.dumps(dataset, sort_keys=True,
                                                         indent=1))
    click.echo(f"rendered {rendered} tiles into {out}")


_KIND_FOR_STAGE_IMAGE = {1: ImageKind.STAGE1_PLAN, 2: ImageKind.STAGE2_PLAN,
                         3: ImageKind.SATELLITE}


@main.command("metrics")
@click.option("--image", "images", multiple=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@click.option("--csv", "as_csv", is_flag=True)
@handle_errors
def metrics_cmd(images, as_json, as_csv):
    """Compute design metrics from rendered or generated PNGs."""
    if not images:
        raise ValidationError("pass at least one --image")
    reports = []
    for path in images:
        image = CanonicalImage.from_png_bytes(Path(path).read_bytes(),
                                              ImageKind.STAGE1_PLAN,
                                              tile_id=Path(path).stem)
        report = metrics_from_raster(classify_image(image), tile_id=Path(path).stem)
        reports.append(report)
    if as_csv:
        cols = ["tile_id", "road_density", "land_use_residential",
                "land_use_commercial", "land_use_manufacturing", "land_use_park",
                "land_use_mixed_use", "height_low", "height_mid", "height_high",
                "open_space"]
        click.echo(",".join(cols))
        for r in reports:
            m = r.metrics
            vals = [r.tile_id, m.road_density, *m.land_use, *m.height_coverage,
                    m.open_space]
            click.echo(",".join(str(v) for v in vals))
    else:
        for r in reports:
            click.echo(json.dumps(r.to_dict(), sort_keys=True))


@main.command()
@click.option("--stage", required=True)
@click.option("--city", default="New York", show_default=True)
@click.option("--metrics", "metrics_path", type=click.Path(exists=True))
@handle_errors
def prompt(stage, city, metrics_path):
    """Build the exact prompt string for a stage from a metrics JSON file."""
    stage = stage if stage == "combined" else int(stage)
    metrics = None
    if metrics_path:
        metrics = DesignMetrics.from_dict(json.loads(Path(metrics_path).read_text()))
    click.echo(build_for_stage(stage, city, metrics).text)


@main.command()
@click.option("--stage", required=True)
@click.option("--constraint", "constraint_path", required=True,
              type=click.Path(exists=True))
@click.option("--city", default="New York", show_default=True)
@click.option("--metrics", "metrics_path", type=click.Path(exists=True))
@click.option("--prompt-file", "prompt_path", type=click.Path(exists=True))
@click.option("--n", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--backend", default="procedural", show_default=True,
              help="'procedural' or an adapter base URL.")
@click.option("--model-id")
@click.option("--out", "out_dir", required=True, type=click.Path())
@handle_errors
def generate(stage, constraint_path, city, metrics_path, prompt_path, n, seed,
             backend, model_id, out_dir):
    """Generate alternatives for one constraint image."""
    from .core import CONSTRAINT_KIND_FOR_STAGE
    stage = stage if stage == "combined" else int(stage)
    if stage not in CONSTRAINT_KIND_FOR_STAGE:
        raise ValidationError(f"unknown stage {stage!r}")
    constraint = CanonicalImage.from_png_bytes(
        Path(constraint_path).read_bytes(), CONSTRAINT_KIND_FOR_STAGE[stage])
    if prompt_path:
        prompt_text = Path(prompt_path).read_text().strip()
    else:
        metrics = None
        if metrics_path:
            metrics = DesignMetrics.from_dict(
                json.loads(Path(metrics_path).read_text()))
        prompt_text = build_for_stage(stage, city, metrics).text
    request = GenerationRequest(stage=stage, constraint=constraint,
                                prompt=prompt_text, num_samples=n, seed=seed,
                                model_id=model_id)
    if backend == "procedural":
        result = generate_procedural(request)
    else:
        result = generate_remote(request, backend)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (image, meta) in enumerate(zip(result.images, result.metadata)):
        (out / f"alt{i:02d}.png").write_bytes(image.to_png_bytes())
        (out / f"alt{i:02d}.json").write_text(json.dumps(
            {"prompt": prompt_text, "stage": stage, **meta}, sort_keys=True))
    click.echo(f"wrote {len(result.images)} alternatives to {out}")


@main.command()
@click.option("--stage", required=True)
@click.option("--pairs", "pairs_dir", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@click.option("--csv", "as_csv", is_flag=True)
@handle_errors
def evaluate(stage, pairs_dir, as_json, as_csv):
    """Score instruction compliance for a directory of (PNG, target JSON) pairs."""
    stage = stage if stage == "combined" else int(stage)
    kind = _KIND_FOR_STAGE_IMAGE.get(stage, ImageKind.STAGE2_PLAN)
    pairs = []
    for target_path in sorted(Path(pairs_dir).glob("*.json")):
        png_path = target_path.with_suffix(".png")
        if not png_path.exists():
            continue
        doc = json.loads(target_path.read_text())
        doc.pop("stage", None)
        doc.pop("prompt", None)
        doc.pop("provenance", None)
        doc.pop("tile_id", None)
        target = DesignMetrics.from_dict(doc) if "road_density" in doc or doc else None
        if target is None:
            continue
        image = CanonicalImage.from_png_bytes(png_path.read_bytes(), kind)
        pairs.append((target, image))
    if not pairs:
        raise ValidationError(f"no (png, json) pairs found in {pairs_dir}")
    report = evaluator.compliance(pairs, stage)
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    elif as_csv:
        click.echo(evaluator.report_csv(report), nl=False)
    else:
        click.echo(evaluator.report_text(report))


@main.group()
def serve():
    """Run the HTTP services."""


@serve.command("workflow")
@click.option("--root", "root_dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--backend", default="procedural", show_default=True,
              help="'procedural' or an adapter base URL.")
@click.option("--model-id")
@click.option("--ui", "ui_dir", type=click.Path(), help="Static UI directory.")
@handle_errors
def serve_workflow(root_dir, host, port, backend, model_id, ui_dir):
    """Serve the session workflow API (and optionally the studio UI)."""
    import uvicorn
    from .workflow.api import create_app
    from .workflow.store import SessionStore
    if backend == "procedural":
        binding = {"kind": "procedural"}
    else:
        binding = {"kind": "remote", "endpoint": backend}
        if model_id:
            binding["model_id"] = model_id
    store = SessionStore(root_dir, default_backend=binding)
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@serve.command("backend")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8001, show_default=True, type=int)
@handle_errors
def serve_backend(host, port):
    """Serve the procedural generator behind the v1 wire protocol."""
    import uvicorn
    from .genbackend.service import create_app
    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
