"""Grid partition, shift augmentation, leakage-free splits and per-tile
vector clipping.

Input geometry must already be in a projected CRS in meters; no reprojection
happens here. Shifts move tiles rightward (+x) and downward (-y); shifted
tiles that are not fully inside the study extent are dropped.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from shapely.geometry import (
    GeometryCollection,
    LineString,
    MultiLineString,
    MultiPolygon,
    Polygon,
    box,
    shape,
)
from shapely.affinity import translate

from .core import LandUseCategory
from .errors import ConfigError, ValidationError

CELL_SIDE = 450.0

# Shift lineage is stored in thirds of the cell side so it stays exact.
THIRD_FRACTIONS = (0.0, 1 / 3, 2 / 3)

# Default shift combinations: identity plus the four both-axis shifts.
# The full {0, 1/3, 2/3}^2 grid is available as mode "grid9".
SHIFT_MODES = {
    "diagonal": ((0, 0), (1, 1), (1, 2), (2, 1), (2, 2)),
    "grid9": tuple((i, j) for i in range(3) for j in range(3)),
}


@dataclass(frozen=True)
class GridCell:
    """One 450 m square tile; ``x0, y0`` is the lower-left corner in meters."""

    id: str
    x0: float
    y0: float
    side: float = CELL_SIDE
    dx_third: int = 0
    dy_third: int = 0
    base_id: str = ""

    @property
    def dx_frac(self) -> float:
        return THIRD_FRACTIONS[self.dx_third]

    @property
    def dy_frac(self) -> float:
        return THIRD_FRACTIONS[self.dy_third]

    @property
    def is_base(self) -> bool:
        return self.dx_third == 0 and self.dy_third == 0

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x0 + self.side, self.y0 + self.side)

    def overlaps(self, other: "GridCell") -> bool:
        """True when the cell interiors intersect (shared edges do not count)."""
        ax0, ay0, ax1, ay1 = self.bounds
        bx0, by0, bx1, by1 = other.bounds
        return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "x0": self.x0,
            "y0": self.y0,
            "side": self.side,
            "dx_third": self.dx_third,
            "dy_third": self.dy_third,
            "base_id": self.base_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridCell":
        return cls(**d)


@dataclass
class TileSet:
    """Augmented cells with split labels and the seed that produced them."""

    cells: list[GridCell]
    labels: dict[str, str]
    seed: int
    test_ratio: float
    extent: tuple[float, float, float, float]
    crs: str = ""
    shift_mode: str = "diagonal"
    cell_size: float = CELL_SIDE

    def cells_with_label(self, label: str) -> list[GridCell]:
        return [c for c in self.cells if self.labels[c.id] == label]

    def to_manifest(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "crs": self.crs,
            "extent": list(self.extent),
            "seed": self.seed,
            "shift_mode": self.shift_mode,
            "test_ratio": self.test_ratio,
            "cells": [dict(c.to_dict(), label=self.labels[c.id]) for c in self.cells],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.to_manifest(), sort_keys=True, indent=1)

    @classmethod
    def from_manifest(cls, manifest: dict) -> "TileSet":
        cells, labels = [], {}
        for row in manifest["cells"]:
            row = dict(row)
            labels[row["id"]] = row.pop("label")
            cells.append(GridCell.from_dict(row))
        return cls(
            cells=cells,
            labels=labels,
            seed=manifest["seed"],
            test_ratio=manifest["test_ratio"],
            extent=tuple(manifest["extent"]),
            crs=manifest.get("crs", ""),
            shift_mode=manifest.get("shift_mode", "diagonal"),
            cell_size=manifest.get("cell_size", CELL_SIDE),
        )


def partition(extent, cell_size: float = CELL_SIDE) -> list[GridCell]:
    """Row-major base cells fully inside ``extent``; partial edge cells dropped.

    Rows scan from the top of the extent downward, columns left to right.
    """
    minx, miny, maxx, maxy = (float(v) for v in extent)
    if maxx < minx or maxy < miny:
        raise ValidationError(f"degenerate extent {extent}")
    n_cols = int((maxx - minx) // cell_size)
    n_rows = int((maxy - miny) // cell_size)
    cells = []
    for r in range(n_rows):
        for c in range(n_cols):
            cell_id = f"r{r:04d}c{c:04d}"
            cells.append(GridCell(
                id=cell_id,
                x0=minx + c * cell_size,
                y0=maxy - (r + 1) * cell_size,
                side=cell_size,
                base_id=cell_id,
            ))
    return cells


def _inside(x0: float, y0: float, side: float, extent) -> bool:
    minx, miny, maxx, maxy = extent
    eps = 1e-9  # tolerate float error at exact boundaries
    return (x0 >= minx - eps and y0 >= miny - eps
            and x0 + side <= maxx + eps and y0 + side <= maxy + eps)


def augment(cells: list[GridCell], extent, mode: str = "diagonal") -> list[GridCell]:
    """Emit shifted copies of base cells; copies leaving the extent are dropped.

    ``mode`` selects the shift combinations (see SHIFT_MODES). Originals are
    always retained.
    """
    if mode not in SHIFT_MODES:
        raise ValidationError(f"unknown shift mode {mode!r}")
    out = []
    for cell in cells:
        if not cell.is_base:
            raise ValidationError(f"augment expects base cells, got shifted {cell.id}")
        for i, j in SHIFT_MODES[mode]:
            if (i, j) == (0, 0):
                out.append(cell)
                continue
            dx = cell.side * i / 3
            dy = cell.side * j / 3
            x0, y0 = cell.x0 + dx, cell.y0 - dy
            if _inside(x0, y0, cell.side, extent):
                out.append(GridCell(
                    id=f"{cell.id}_s{i}{j}",
                    x0=x0,
                    y0=y0,
                    side=cell.side,
                    dx_third=i,
                    dy_third=j,
                    base_id=cell.id,
                ))
    return out


def split(cells: list[GridCell], test_ratio: float = 0.10, seed: int = 0,
          *, extent=None, crs: str = "", shift_mode: str = "diagonal") -> TileSet:
    """Label cells train/test/excluded with no train/test footprint overlap.

    Test cells are drawn uniformly (seeded, without replacement) from the base
    cells; every other cell whose footprint overlaps a test cell is excluded.
    """
    if not (0.0 < test_ratio < 1.0):
        raise ValidationError(f"test_ratio {test_ratio} outside (0, 1)")
    base = sorted((c for c in cells if c.is_base), key=lambda c: c.id)
    if not base:
        raise ValidationError("no base cells to split")
    n_test = max(1, round(test_ratio * len(base)))
    rng = random.Random(seed)
    test_ids = set(rng.sample([c.id for c in base], n_test))
    test_cells = [c for c in base if c.id in test_ids]

    labels: dict[str, str] = {}
    for cell in cells:
        if cell.id in test_ids:
            labels[cell.id] = "test"
        elif any(cell.overlaps(t) for t in test_cells):
            labels[cell.id] = "excluded"
        else:
            labels[cell.id] = "train"
    if extent is None:
        xs = [c.x0 for c in cells] + [c.x0 + c.side for c in cells]
        ys = [c.y0 for c in cells] + [c.y0 + c.side for c in cells]
        extent = (min(xs), min(ys), max(xs), max(ys))
    return TileSet(
        cells=list(cells),
        labels=labels,
        seed=seed,
        test_ratio=test_ratio,
        extent=tuple(float(v) for v in extent),
        crs=crs,
        shift_mode=shift_mode,
        cell_size=base[0].side,
    )


@dataclass
class CityLayers:
    """City-wide vector layers in one projected CRS (meters)."""

    crs: str
    water: list = field(default_factory=list)
    railways: list = field(default_factory=list)
    major_roads: list = field(default_factory=list)
    minor_roads: list = field(default_factory=list)
    land_use: list = field(default_factory=list)   # (polygon, LandUseCategory)
    buildings: list = field(default_factory=list)  # (polygon, height or None)


@dataclass
class VectorLayerBundle:
    """One tile's clipped layers in tile-local meters (origin lower-left)."""

    cell_id: str
    side: float
    water: list = field(default_factory=list)
    railways: list = field(default_factory=list)
    major_roads: list = field(default_factory=list)
    minor_roads: list = field(default_factory=list)
    land_use: list = field(default_factory=list)
    buildings: list = field(default_factory=list)


def _polygons(geom) -> list[Polygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, Polygon):
        return [geom]
    if isinstance(geom, (MultiPolygon, GeometryCollection)):
        out = []
        for g in geom.geoms:
            out.extend(_polygons(g))
        return out
    return []


def _lines(geom) -> list[LineString]:
    if geom.is_empty:
        return []
    if isinstance(geom, LineString):
        return [geom]
    if isinstance(geom, (MultiLineString, GeometryCollection)):
        out = []
        for g in geom.geoms:
            out.extend(_lines(g))
        return out
    return []


def clip(cell: GridCell, layers: CityLayers, *, crs: str | None = None) -> VectorLayerBundle:
    """Intersect city layers with the cell footprint, in tile-local coords."""
    if crs is not None and layers.crs != crs:
        raise ConfigError(
            f"CRS mismatch: layers are {layers.crs!r} but tileset expects {crs!r}")
    footprint = box(*cell.bounds)

    def local(geom):
        return translate(geom, xoff=-cell.x0, yoff=-cell.y0)

    bundle = VectorLayerBundle(cell_id=cell.id, side=cell.side)
    for geom in layers.water:
        bundle.water.extend(local(g) for g in _polygons(geom.intersection(footprint)))
    for geom in layers.railways:
        bundle.railways.extend(local(g) for g in _lines(geom.intersection(footprint)))
    for geom in layers.major_roads:
        bundle.major_roads.extend(local(g) for g in _lines(geom.intersection(footprint)))
    for geom in layers.minor_roads:
        bundle.minor_roads.extend(local(g) for g in _lines(geom.intersection(footprint)))
    for geom, category in layers.land_use:
        for g in _polygons(geom.intersection(footprint)):
            bundle.land_use.append((local(g), LandUseCategory(category)))
    for geom, height in layers.buildings:
        for g in _polygons(geom.intersection(footprint)):
            bundle.buildings.append((local(g), height))
    return bundle


_CATEGORY_NAMES = {c.name.lower(): c for c in LandUseCategory}
_CATEGORY_NAMES.update({"mixed-use": LandUseCategory.MIXED_USE,
                        "mixed use": LandUseCategory.MIXED_USE,
                        "industrial": LandUseCategory.MANUFACTURING})

_CITY_CONFIG_KEYS = {
    "crs", "layers", "land_use_attribute", "land_use_mapping",
    "height_attribute", "highway_attribute", "major_road_tags",
}
_LAYER_ROLES = {"water", "railway", "major_roads", "minor_roads",
                "land_use", "buildings", "roads"}


def _load_feature_collection(path: Path) -> list[tuple]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read GeoJSON {path}: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise ConfigError(f"{path} is not a GeoJSON FeatureCollection")
    out = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry")
        if geom is None:
            continue
        out.append((shape(geom), feature.get("properties") or {}))
    return out


def load_city_layers(config: dict, base_dir: Path | str = ".") -> CityLayers:
    """Read GeoJSON layer files named by a city config into CityLayers.

    The config names the CRS, one file per layer role, the land-use
    source-to-category mapping and the building-height attribute. A combined
    "roads" layer may be split into major/minor via a highway-tag allowlist.
    """
    unknown = set(config) - _CITY_CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown city config keys: {sorted(unknown)}")
    if "crs" not in config:
        raise ConfigError("city config missing 'crs'")
    base = Path(base_dir)
    layer_paths = config.get("layers", {})
    bad_roles = set(layer_paths) - _LAYER_ROLES
    if bad_roles:
        raise ConfigError(f"unknown layer roles: {sorted(bad_roles)}")

    layers = CityLayers(crs=config["crs"])

    def features(role: str) -> list[tuple]:
        if role not in layer_paths:
            return []
        return _load_feature_collection(base / layer_paths[role])

    for geom, _ in features("water"):
        layers.water.extend(_polygons(geom))
    for geom, _ in features("railway"):
        layers.railways.extend(_lines(geom))
    for geom, _ in features("major_roads"):
        layers.major_roads.extend(_lines(geom))
    for geom, _ in features("minor_roads"):
        layers.minor_roads.extend(_lines(geom))

    if "roads" in layer_paths:
        highway_attr = config.get("highway_attribute", "highway")
        major_tags = set(config.get("major_road_tags", []))
        for geom, props in features("roads"):
            target = layers.major_roads if props.get(highway_attr) in major_tags \
                else layers.minor_roads
            target.extend(_lines(geom))

    lu_attr = config.get("land_use_attribute", "landuse")
    mapping = {str(k): v for k, v in config.get("land_use_mapping", {}).items()}
    for geom, props in features("land_use"):
        raw = str(props.get(lu_attr))
        name = str(mapping.get(raw, raw)).lower()
        if name not in _CATEGORY_NAMES:
            raise ConfigError(
                f"land-use value {raw!r} does not map to a category "
                f"(known: {sorted(_CATEGORY_NAMES)})")
        for poly in _polygons(geom):
            layers.land_use.append((poly, _CATEGORY_NAMES[name]))

    height_attr = config.get("height_attribute", "height")
    for geom, props in features("buildings"):
        height = props.get(height_attr)
        height = float(height) if height is not None else None
        for poly in _polygons(geom):
            layers.buildings.append((poly, height))
    return layers
