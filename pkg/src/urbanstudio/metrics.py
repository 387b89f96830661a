"""Design metrics from vector bundles or decoded class maps, Jenks height
classification, and land-use entropy.

Conventions (applied identically on target and measured sides):
- land-use proportions are over land-use-assigned area only (zero vector when
  a tile has none);
- open space is all non-building area, roads and water included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from shapely.ops import unary_union

from .core import (
    BUILDING_PIXELS,
    DesignMetrics,
    HeightClass,
    LAND_USE_PIXELS,
    PixelClass,
)
from .errors import ValidationError


@dataclass(frozen=True)
class JenksBreaks:
    """Class thresholds (inclusive upper bounds, strictly increasing)."""

    thresholds: tuple[float, ...]
    city: str = ""
    sample_size: int = 0

    @property
    def b1(self) -> float:
        return self.thresholds[0]

    @property
    def b2(self) -> float:
        return self.thresholds[1]

    def classify(self, value: float) -> HeightClass:
        for i, t in enumerate(self.thresholds):
            if value <= t:
                return HeightClass(i)
        return HeightClass(len(self.thresholds))

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "city": self.city,
                "sample_size": self.sample_size}

    @classmethod
    def from_dict(cls, d: dict) -> "JenksBreaks":
        return cls(tuple(d["thresholds"]), d.get("city", ""), d.get("sample_size", 0))


@dataclass(frozen=True)
class MetricReport:
    metrics: DesignMetrics
    provenance: str  # "vector" | "raster"
    tile_id: str = ""

    def to_dict(self) -> dict:
        return dict(self.metrics.to_dict(), provenance=self.provenance,
                    tile_id=self.tile_id)


def jenks_breaks(values, k: int = 3, *, city: str = "") -> JenksBreaks:
    """Fisher-Jenks exact optimal 1-D classification into ``k`` classes.

    Minimizes total within-class sum of squared deviations with an O(k n^2)
    dynamic program; thresholds are the class maxima of the first k-1 classes.
    Ties resolve toward the smallest break values.
    """
    data = sorted(float(v) for v in values)
    n = len(data)
    if n == 0:
        raise ValidationError("jenks_breaks needs at least one value")
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if len(set(data)) < k:
        raise ValidationError(f"need at least {k} distinct values, got {len(set(data))}")

    # Prefix sums for O(1) within-class SSE of data[i..j] (0-based, inclusive).
    s1 = np.concatenate([[0.0], np.cumsum(data)])
    s2 = np.concatenate([[0.0], np.cumsum(np.square(data))])

    def sse(i: int, j: int) -> float:
        cnt = j - i + 1
        total = s1[j + 1] - s1[i]
        return max(0.0, (s2[j + 1] - s2[i]) - total * total / cnt)

    inf = float("inf")
    # cost[m][j]: optimal SSE for first j values split into m classes.
    cost = [[inf] * (n + 1) for _ in range(k + 1)]
    cut = [[0] * (n + 1) for _ in range(k + 1)]
    cost[0][0] = 0.0
    for m in range(1, k + 1):
        for j in range(m, n + 1):
            best, best_i = inf, m
            # Scan ascending with strict improvement: earliest split wins ties,
            # which keeps earlier class boundaries (smallest breaks).
            for i in range(m, j + 1):
                c = cost[m - 1][i - 1] + sse(i - 1, j - 1)
                if c < best - 1e-12:
                    best, best_i = c, i
            cost[m][j] = best
            cut[m][j] = best_i
    # Backtrack boundary indices (exclusive ends of classes 1..k-1).
    ends = []
    j = n
    for m in range(k, 1, -1):
        j = cut[m][j] - 1
        ends.append(j)
    ends.reverse()
    thresholds = tuple(data[e - 1] for e in ends)
    return JenksBreaks(thresholds=thresholds, city=city, sample_size=n)


def entropy(p) -> float:
    """Shannon entropy (natural log) of a 5-way distribution; 0 log 0 = 0."""
    vec = [float(v) for v in p]
    if any(v < 0 for v in vec):
        raise ValidationError(f"negative component in {vec}")
    total = math.fsum(vec)
    if total == 0.0:
        return 0.0
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"distribution sums to {total}, expected 0 or 1")
    return -math.fsum(v * math.log(v) for v in vec if v > 0)


def _road_area(bundle, spec) -> float:
    strokes = []
    for line in bundle.major_roads:
        strokes.append(line.buffer(spec.major_road_width / 2))
    for line in bundle.minor_roads:
        strokes.append(line.buffer(spec.minor_road_width / 2))
    if not strokes:
        return 0.0
    from shapely.geometry import box
    tile = box(0, 0, bundle.side, bundle.side)
    return unary_union(strokes).intersection(tile).area


def metrics_from_vector(bundle, breaks: JenksBreaks | None = None,
                        *, spec=None) -> MetricReport:
    """Metrics from one tile's clipped vector layers.

    ``spec`` supplies the road stroke widths used to polygonize line roads
    (defaults to the rasterizer's defaults, keeping both sides consistent).
    """
    if spec is None:
        from .rasterizer import RenderSpec
        spec = RenderSpec()
    tile_area = bundle.side * bundle.side

    road_density = _road_area(bundle, spec) / tile_area

    lu_areas = [0.0] * 5
    for geom, category in bundle.land_use:
        lu_areas[int(category)] += geom.area
    lu_total = math.fsum(lu_areas)
    land_use = tuple(a / lu_total for a in lu_areas) if lu_total > 0 else (0.0,) * 5

    height_areas = [0.0, 0.0, 0.0]
    for geom, height in bundle.buildings:
        if breaks is None:
            cls = HeightClass.LOW_STORY
        else:
            cls = breaks.classify(height) if height is not None else HeightClass.LOW_STORY
        height_areas[int(cls)] += geom.area
    height_coverage = tuple(a / tile_area for a in height_areas)
    open_space = 1.0 - math.fsum(height_coverage)

    metrics = DesignMetrics(
        road_density=road_density,
        land_use=land_use,
        height_coverage=height_coverage,
        open_space=open_space,
    )
    return MetricReport(metrics=metrics, provenance="vector", tile_id=bundle.cell_id)


def metrics_from_raster(class_map: np.ndarray, *, tile_id: str = "") -> MetricReport:
    """Same metric formulas over pixel counts of a decoded class map."""
    cmap = np.asarray(class_map)
    if cmap.size == 0:
        raise ValidationError("empty class map")
    counts = np.bincount(cmap.ravel().astype(np.int64), minlength=len(PixelClass))
    total = float(cmap.size)

    road = (counts[PixelClass.MAJOR_ROAD] + counts[PixelClass.MINOR_ROAD]) / total
    lu_counts = [float(counts[p]) for p in LAND_USE_PIXELS]
    lu_total = math.fsum(lu_counts)
    land_use = tuple(c / lu_total for c in lu_counts) if lu_total > 0 else (0.0,) * 5
    height_coverage = tuple(float(counts[p]) / total for p in BUILDING_PIXELS)
    open_space = 1.0 - math.fsum(height_coverage)

    metrics = DesignMetrics(
        road_density=float(road),
        land_use=land_use,
        height_coverage=height_coverage,
        open_space=open_space,
    )
    return MetricReport(metrics=metrics, provenance="raster", tile_id=tile_id)
