"""Render clipped vector bundles into the canonical images, and fetch
satellite imagery for tiles from any XYZ tile source.

Canonical rendering is hard-edged (no anti-aliasing): every pixel holds an
exact palette color, so decoding our own renders is lossless. Satellite
mosaics are resampled bilinearly.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from io import BytesIO
from pathlib import Path

import numpy as np
import requests
from PIL import Image, ImageDraw
from shapely.ops import unary_union

from .core import (
    CanonicalImage,
    DEFAULT_IMAGE_SIZE,
    HEIGHT_TO_PIXEL,
    HeightClass,
    ImageKind,
    LAND_USE_TO_PIXEL,
    PixelClass,
    colorize_class_map,
)
from .errors import ConfigError, NetworkError, ValidationError
from .metrics import JenksBreaks
from .tiler import GridCell, VectorLayerBundle, _polygons

log = logging.getLogger(__name__)

# Layers drawn per kind, bottom to top ordering comes from RenderSpec.
_KIND_LAYERS = {
    ImageKind.SITE_CONSTRAINTS: {"water", "railway", "major_roads"},
    ImageKind.STAGE1_PLAN: {"land_use", "water", "railway", "minor_roads", "major_roads"},
    ImageKind.STAGE2_PLAN: {"land_use", "water", "railway", "minor_roads",
                            "major_roads", "buildings"},
}


@dataclass(frozen=True)
class RenderSpec:
    """Rasterization parameters; stroke widths are meters on the ground."""

    image_size: int = DEFAULT_IMAGE_SIZE
    major_road_width: float = 24.0
    minor_road_width: float = 12.0
    railway_width: float = 10.0
    draw_order: tuple = ("land_use", "water", "railway",
                         "minor_roads", "major_roads", "buildings")

    def __post_init__(self) -> None:
        for w in (self.major_road_width, self.minor_road_width, self.railway_width):
            if w <= 0:
                raise ValidationError(f"stroke width {w} must be positive")
        if self.image_size < 4:
            raise ValidationError(f"image size {self.image_size} too small")

    def order_for(self, kind: ImageKind) -> list[str]:
        needed = _KIND_LAYERS[kind]
        missing = needed - set(self.draw_order)
        if missing:
            raise ValidationError(f"draw order missing layers {sorted(missing)}")
        return [layer for layer in self.draw_order if layer in needed]


def _polygon_mask(polygons, size: int, scale: float, side: float) -> np.ndarray:
    """Hard-edged boolean mask of a polygon list (tile-local y-up meters)."""
    img = Image.new("L", (size, size), 0)
    draw = ImageDraw.Draw(img)

    def px(coords):
        return [(x * scale, (side - y) * scale) for x, y in coords]

    for poly in polygons:
        ext = list(poly.exterior.coords)
        if len(ext) < 3:
            continue
        draw.polygon(px(ext), fill=1)
        for ring in poly.interiors:
            pts = list(ring.coords)
            if len(pts) >= 3:
                draw.polygon(px(pts), fill=0)
    return np.asarray(img, dtype=bool)


def _stroke_polygons(lines, width: float):
    if not lines:
        return []
    return _polygons(unary_union([line.buffer(width / 2) for line in lines]))


def _bundle_masks(bundle: VectorLayerBundle, spec: RenderSpec, layer: str):
    """Yield (mask, class id) pairs for one layer role."""
    size, side = spec.image_size, bundle.side
    scale = size / side
    if layer == "water":
        yield _polygon_mask(bundle.water, size, scale, side), PixelClass.WATER
    elif layer == "railway":
        polys = _stroke_polygons(bundle.railways, spec.railway_width)
        yield _polygon_mask(polys, size, scale, side), PixelClass.RAILWAY
    elif layer == "major_roads":
        polys = _stroke_polygons(bundle.major_roads, spec.major_road_width)
        yield _polygon_mask(polys, size, scale, side), PixelClass.MAJOR_ROAD
    elif layer == "minor_roads":
        polys = _stroke_polygons(bundle.minor_roads, spec.minor_road_width)
        yield _polygon_mask(polys, size, scale, side), PixelClass.MINOR_ROAD
    elif layer == "land_use":
        by_category: dict = {}
        for geom, category in bundle.land_use:
            by_category.setdefault(category, []).append(geom)
        for category, geoms in sorted(by_category.items()):
            yield (_polygon_mask(geoms, size, scale, side),
                   LAND_USE_TO_PIXEL[category])
    else:
        raise ValidationError(f"unknown layer {layer!r}")


def _class_map(bundle: VectorLayerBundle, spec: RenderSpec, kind: ImageKind,
               breaks: JenksBreaks | None = None) -> np.ndarray:
    cmap = np.full((spec.image_size, spec.image_size),
                   int(PixelClass.BACKGROUND), dtype=np.uint8)
    for layer in spec.order_for(kind):
        if layer == "buildings":
            _paint_buildings(cmap, bundle, spec, breaks)
            continue
        for mask, class_id in _bundle_masks(bundle, spec, layer):
            cmap[mask] = int(class_id)
    return cmap


def _paint_buildings(cmap: np.ndarray, bundle: VectorLayerBundle,
                     spec: RenderSpec, breaks: JenksBreaks | None) -> None:
    size, side = spec.image_size, bundle.side
    scale = size / side
    by_class: dict = {}
    for geom, height in bundle.buildings:
        if height is None:
            # Missing height attribute: configured fallback class.
            log.warning("building in %s has no height; classifying as low-story",
                        bundle.cell_id)
            cls = HeightClass.LOW_STORY
        elif breaks is None:
            cls = HeightClass.LOW_STORY
        else:
            cls = breaks.classify(height)
        by_class.setdefault(cls, []).append(geom)
    for cls, geoms in sorted(by_class.items()):
        mask = _polygon_mask(geoms, size, scale, side)
        cmap[mask] = int(HEIGHT_TO_PIXEL[cls])


def site_constraints_class_map(bundle: VectorLayerBundle,
                               spec: RenderSpec = RenderSpec()) -> np.ndarray:
    return _class_map(bundle, spec, ImageKind.SITE_CONSTRAINTS)


def stage1_class_map(bundle: VectorLayerBundle,
                     spec: RenderSpec = RenderSpec()) -> np.ndarray:
    return _class_map(bundle, spec, ImageKind.STAGE1_PLAN)


def stage2_class_map(bundle: VectorLayerBundle, spec: RenderSpec,
                     breaks: JenksBreaks) -> np.ndarray:
    return _class_map(bundle, spec, ImageKind.STAGE2_PLAN, breaks)


def render_site_constraints(bundle: VectorLayerBundle,
                            spec: RenderSpec = RenderSpec()) -> CanonicalImage:
    """Background fill, then water, railway and major-road strokes."""
    cmap = site_constraints_class_map(bundle, spec)
    return CanonicalImage(kind=ImageKind.SITE_CONSTRAINTS,
                          pixels=colorize_class_map(cmap), tile_id=bundle.cell_id)


def render_stage1(bundle: VectorLayerBundle,
                  spec: RenderSpec = RenderSpec()) -> CanonicalImage:
    """Site constraints plus land-use parcels (below roads) and minor roads."""
    cmap = stage1_class_map(bundle, spec)
    return CanonicalImage(kind=ImageKind.STAGE1_PLAN,
                          pixels=colorize_class_map(cmap), tile_id=bundle.cell_id)


def render_stage2(bundle: VectorLayerBundle, spec: RenderSpec,
                  breaks: JenksBreaks) -> CanonicalImage:
    """Stage-1 rendering with building footprints on top in the height grays."""
    cmap = stage2_class_map(bundle, spec, breaks)
    return CanonicalImage(kind=ImageKind.STAGE2_PLAN,
                          pixels=colorize_class_map(cmap), tile_id=bundle.cell_id)


# ---------------------------------------------------------------------------
# Satellite tiles

_EARTH_RADIUS = 6378137.0
_WORLD = 2 * math.pi * _EARTH_RADIUS
_TILE_PX = 256

_inflight_lock = threading.Lock()
_inflight = threading.BoundedSemaphore(8)


def configure_fetch_limit(n: int) -> None:
    """Bound concurrent satellite fetches across threads (default 8)."""
    global _inflight
    if n < 1:
        raise ValidationError("fetch limit must be >= 1")
    with _inflight_lock:
        _inflight = threading.BoundedSemaphore(n)


@dataclass(frozen=True)
class TileSource:
    """XYZ tile endpoint; the API key is read from an environment variable."""

    url_template: str
    zoom: int = 17
    api_key_env: str | None = None

    def __post_init__(self) -> None:
        for ph in ("{z}", "{x}", "{y}"):
            if ph not in self.url_template:
                raise ValidationError(f"url template missing {ph} placeholder")

    @property
    def cache_id(self) -> str:
        digest = hashlib.sha1(
            f"{self.url_template}|{self.zoom}".encode()).hexdigest()
        return digest[:12]

    def url(self, z: int, x: int, y: int) -> str:
        url = self.url_template.replace("{z}", str(z)).replace(
            "{x}", str(x)).replace("{y}", str(y))
        if "{key}" in url:
            if not self.api_key_env:
                raise ConfigError("url template needs a key but api_key_env is unset")
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(
                    f"API key environment variable {self.api_key_env} is not set")
            url = url.replace("{key}", key)
        return url


def _mercator_to_tile(x: float, y: float, zoom: int) -> tuple[float, float]:
    n = 2 ** zoom
    tx = (x + _WORLD / 2) / _WORLD * n
    ty = (_WORLD / 2 - y) / _WORLD * n
    return tx, ty


def _fetch_tile_bytes(session, url: str, *, attempts: int = 3,
                      timeout: float = 30.0, sleep=time.sleep) -> bytes:
    delay = 0.5
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            resp = session.get(url, timeout=timeout)
            if resp.status_code == 200:
                return resp.content
            last = NetworkError(f"HTTP {resp.status_code} for {url}")
        except requests.RequestException as exc:
            last = NetworkError(f"request failed for {url}: {exc}")
        if attempt < attempts - 1:
            sleep(delay)
            delay *= 2
    raise last if last is not None else NetworkError(f"fetch failed for {url}")


def fetch_satellite(cell: GridCell, source: TileSource, *,
                    cache_dir: Path | str, crs: str = "EPSG:3857",
                    image_size: int = DEFAULT_IMAGE_SIZE,
                    session: requests.Session | None = None,
                    sleep=time.sleep) -> CanonicalImage:
    """Mosaic, crop and resample web-mercator tiles covering the cell.

    Results are cached on disk keyed by (cell, source, zoom); a cache hit
    performs no network calls and returns identical bytes. Cell coordinates
    must be EPSG:3857 meters (the one CRS with a closed-form tile mapping).
    """
    if crs != "EPSG:3857":
        raise ConfigError(
            f"satellite fetching requires EPSG:3857 cell coordinates, got {crs!r}")
    cache_path = (Path(cache_dir) / source.cache_id / str(source.zoom)
                  / f"{cell.id}.png")
    if cache_path.exists():
        return CanonicalImage.from_png_bytes(
            cache_path.read_bytes(), ImageKind.SATELLITE, tile_id=cell.id)

    if session is None:
        session = requests.Session()
    x0, y0, x1, y1 = cell.bounds
    tx0f, ty0f = _mercator_to_tile(x0, y1, source.zoom)  # top-left
    tx1f, ty1f = _mercator_to_tile(x1, y0, source.zoom)  # bottom-right
    tx_lo, tx_hi = math.floor(tx0f), math.ceil(tx1f) - 1
    ty_lo, ty_hi = math.floor(ty0f), math.ceil(ty1f) - 1

    mosaic = Image.new("RGB", ((tx_hi - tx_lo + 1) * _TILE_PX,
                               (ty_hi - ty_lo + 1) * _TILE_PX))
    with _inflight:
        for ty in range(ty_lo, ty_hi + 1):
            for tx in range(tx_lo, tx_hi + 1):
                data = _fetch_tile_bytes(session, source.url(source.zoom, tx, ty),
                                         sleep=sleep)
                tile = Image.open(BytesIO(data)).convert("RGB")
                if tile.size != (_TILE_PX, _TILE_PX):
                    tile = tile.resize((_TILE_PX, _TILE_PX), Image.BILINEAR)
                mosaic.paste(tile, ((tx - tx_lo) * _TILE_PX, (ty - ty_lo) * _TILE_PX))

    crop = mosaic.crop((
        round((tx0f - tx_lo) * _TILE_PX),
        round((ty0f - ty_lo) * _TILE_PX),
        round((tx1f - tx_lo) * _TILE_PX),
        round((ty1f - ty_lo) * _TILE_PX),
    ))
    final = crop.resize((image_size, image_size), Image.BILINEAR)

    cache_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = cache_path.with_suffix(".tmp")
    buf = BytesIO()
    final.save(buf, format="PNG")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, cache_path)  # single-writer protocol: temp + atomic rename
    return CanonicalImage.from_png_bytes(
        cache_path.read_bytes(), ImageKind.SATELLITE, tile_id=cell.id)
