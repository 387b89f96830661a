"""Deterministic synthetic city tiles for demos and oracle tests.

Layouts are seeded: a water band, a railway, crossing major roads, a minor
road grid, land-use parcels between roads and rectangular buildings inset in
parcels. Buildings never overlap roads or water, which keeps vector and
raster metrics in close agreement.
"""

from __future__ import annotations

import numpy as np
from shapely.geometry import LineString, Polygon, box

from .core import CanonicalImage, DesignMetrics, LandUseCategory
from .rasterizer import RenderSpec, render_site_constraints
from .tiler import VectorLayerBundle


def _rect(x0, y0, x1, y1) -> Polygon:
    return box(x0, y0, x1, y1)


def synthetic_bundle(seed: int, side: float = 450.0,
                     cell_id: str | None = None) -> VectorLayerBundle:
    """One tile's worth of synthetic vector layers (tile-local meters)."""
    rng = np.random.default_rng(seed)
    bundle = VectorLayerBundle(cell_id=cell_id or f"synth{seed:04d}", side=side)

    # Water band along one edge.
    water_side = int(rng.integers(0, 4))
    water_w = float(rng.uniform(40, 80))
    if water_side == 0:
        bundle.water.append(_rect(0, 0, water_w, side))
    elif water_side == 1:
        bundle.water.append(_rect(side - water_w, 0, side, side))
    elif water_side == 2:
        bundle.water.append(_rect(0, 0, side, water_w))
    else:
        bundle.water.append(_rect(0, side - water_w, side, side))

    # Railway hugging the water band, full crossing.
    rail_off = water_w + float(rng.uniform(25, 45))
    if water_side in (0, 1):
        x = rail_off if water_side == 0 else side - rail_off
        bundle.railways.append(LineString([(x, 0), (x, side)]))
    else:
        y = rail_off if water_side == 2 else side - rail_off
        bundle.railways.append(LineString([(0, y), (side, y)]))

    # Crossing major roads. Positions keep clear of the water band.
    lo, hi = side * 0.35, side * 0.65
    major_x = float(rng.uniform(lo, hi))
    major_y = float(rng.uniform(lo, hi))
    bundle.major_roads.append(LineString([(major_x, 0), (major_x, side)]))
    bundle.major_roads.append(LineString([(0, major_y), (side, major_y)]))

    # A couple of minor roads subdividing the quadrants.
    minor_xs = [major_x / 2, (major_x + side) / 2]
    minor_ys = [major_y / 2, (major_y + side) / 2]
    for x in minor_xs:
        bundle.minor_roads.append(LineString([(x, 0), (x, side)]))
    for y in minor_ys:
        bundle.minor_roads.append(LineString([(0, y), (side, y)]))

    # Parcels fill the blocks between road centerlines, inset by the stroke
    # half-width plus a margin, and clipped away from water and railway.
    spec = RenderSpec()
    cuts_x = sorted([0.0, *minor_xs, major_x, side])
    cuts_y = sorted([0.0, *minor_ys, major_y, side])
    margin = 3.0
    keepout = [g.buffer(spec.railway_width / 2 + margin) for g in bundle.railways]
    keepout += [w.buffer(margin) for w in bundle.water]

    def road_half(v, centers, width):
        return any(abs(v - c) < 1e-6 for c in centers) and width / 2 + margin

    categories = list(LandUseCategory)
    weights = rng.dirichlet(np.ones(5) * 1.5)
    parcel_rects = []
    for xi in range(len(cuts_x) - 1):
        for yi in range(len(cuts_y) - 1):
            x0, x1 = cuts_x[xi], cuts_x[xi + 1]
            y0, y1 = cuts_y[yi], cuts_y[yi + 1]
            ins_x0 = x0 + (road_half(x0, [major_x], spec.major_road_width)
                           or road_half(x0, minor_xs, spec.minor_road_width) or margin)
            ins_x1 = x1 - (road_half(x1, [major_x], spec.major_road_width)
                           or road_half(x1, minor_xs, spec.minor_road_width) or margin)
            ins_y0 = y0 + (road_half(y0, [major_y], spec.major_road_width)
                           or road_half(y0, minor_ys, spec.minor_road_width) or margin)
            ins_y1 = y1 - (road_half(y1, [major_y], spec.major_road_width)
                           or road_half(y1, minor_ys, spec.minor_road_width) or margin)
            if ins_x1 - ins_x0 < 30 or ins_y1 - ins_y0 < 30:
                continue
            parcel = _rect(ins_x0, ins_y0, ins_x1, ins_y1)
            for ko in keepout:
                parcel = parcel.difference(ko)
            if parcel.is_empty:
                continue
            geoms = list(parcel.geoms) if parcel.geom_type == "MultiPolygon" else [parcel]
            for g in geoms:
                gx0, gy0, gx1, gy1 = g.bounds
                if gx1 - gx0 < 30 or gy1 - gy0 < 30:
                    continue
                # Keep parcels rectangular so buildings can be inset simply.
                g = _rect(gx0, gy0, gx1, gy1)
                category = categories[rng.choice(5, p=weights)]
                bundle.land_use.append((g, category))
                parcel_rects.append((gx0, gy0, gx1, gy1, category))

    # Buildings: rectangles on a jittered grid inside each parcel, with
    # heights drawn from three bands so Jenks classes are well separated.
    bands = [(4.0, 12.0), (18.0, 36.0), (50.0, 140.0)]
    for (px0, py0, px1, py1, _category) in parcel_rects:
        pitch = float(rng.uniform(26, 34))
        bsize = float(rng.uniform(12, pitch - 10))
        x = px0 + 4
        while x + bsize <= px1 - 4:
            y = py0 + 4
            while y + bsize <= py1 - 4:
                if rng.random() < 0.75:
                    lo_h, hi_h = bands[int(rng.choice(3, p=[0.5, 0.35, 0.15]))]
                    bundle.buildings.append(
                        (_rect(x, y, x + bsize, y + bsize), float(rng.uniform(lo_h, hi_h))))
                y += pitch
            x += pitch
    return bundle


def synthetic_site(seed: int, size: int = 512) -> CanonicalImage:
    """Site-constraints image of a synthetic tile (water, rail, major roads)."""
    bundle = synthetic_bundle(seed)
    return render_site_constraints(bundle, RenderSpec(image_size=size))


def sample_stage1_targets(rng: np.random.Generator,
                          base_road_density: float) -> DesignMetrics:
    """Feasible stage-1 targets given the constraint image's road density."""
    road = float(np.clip(base_road_density + rng.uniform(0.04, 0.12), 0.0, 0.3))
    land_use = rng.dirichlet(np.ones(5))
    return DesignMetrics(road_density=road, land_use=tuple(float(v) for v in land_use))


def sample_stage2_targets(rng: np.random.Generator) -> DesignMetrics:
    """Feasible stage-2 targets: moderate total coverage, well under packing."""
    total = float(rng.uniform(0.12, 0.28))
    shares = rng.dirichlet(np.ones(3))
    heights = tuple(float(total * s) for s in shares)
    return DesignMetrics(height_coverage=heights,
                         open_space=1.0 - float(np.sum(np.asarray(heights))))
