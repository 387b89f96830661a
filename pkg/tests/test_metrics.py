import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from urbanstudio.core import DesignMetrics, HeightClass, PixelClass, classify_image
from urbanstudio.errors import ValidationError
from urbanstudio.metrics import (
    JenksBreaks,
    entropy,
    jenks_breaks,
    metrics_from_raster,
    metrics_from_vector,
)
from urbanstudio.rasterizer import RenderSpec, render_stage1
from urbanstudio.tiler import VectorLayerBundle


def brute_force_best_sse(values, k=3):
    """Exhaustive search over ordered k-partitions (oracle for small n)."""
    data = sorted(values)
    n = len(data)

    def sse(seg):
        mean = sum(seg) / len(seg)
        return sum((x - mean) ** 2 for x in seg)

    best = None
    for i in range(1, n - 1):
        for j in range(i + 1, n):
            total = sse(data[:i]) + sse(data[i:j]) + sse(data[j:])
            if best is None or total < best:
                best = total
    return best


def partition_sse(values, breaks: JenksBreaks):
    segments = {c: [] for c in HeightClass}
    for v in sorted(values):
        segments[breaks.classify(v)].append(v)
    total = 0.0
    for seg in segments.values():
        if seg:
            mean = sum(seg) / len(seg)
            total += sum((x - mean) ** 2 for x in seg)
    return total


class TestJenks:
    def test_three_obvious_clusters(self):
        data = [1, 2, 3, 10, 11, 12, 100, 101, 102]
        breaks = jenks_breaks(data, 3)
        assert breaks.classify(3) == HeightClass.LOW_STORY
        assert breaks.classify(10) == HeightClass.MEDIUM_STORY
        assert breaks.classify(100) == HeightClass.HIGH_STORY
        assert breaks.thresholds == (3.0, 12.0)

    def test_paired_values(self):
        breaks = jenks_breaks([1, 1, 2, 2, 3, 3], 3)
        assert breaks.thresholds == (1.0, 2.0)

    def test_n_equals_k(self):
        breaks = jenks_breaks([4.0, 9.0, 30.0], 3)
        assert breaks.thresholds == (4.0, 9.0)
        assert partition_sse([4.0, 9.0, 30.0], breaks) == 0.0

    def test_rejects_too_few_distinct(self):
        with pytest.raises(ValidationError):
            jenks_breaks([5, 5, 5, 5], 3)
        with pytest.raises(ValidationError):
            jenks_breaks([], 3)
        with pytest.raises(ValidationError):
            jenks_breaks([1, 2, 3], 1)

    def test_thresholds_strictly_increase(self):
        breaks = jenks_breaks([0.5, 1.5, 2.5, 9.9], 3)
        assert breaks.b1 < breaks.b2

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n = int(rng.integers(3, 13))
            data = rng.uniform(0, 50, n).round(2).tolist()
            if len(set(data)) < 3:
                continue
            breaks = jenks_breaks(data, 3)
            assert partition_sse(data, breaks) == pytest.approx(
                brute_force_best_sse(data), abs=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 40), min_size=3, max_size=12)
           .filter(lambda xs: len(set(xs)) >= 3))
    def test_property_optimal_sse(self, xs):
        data = [float(x) for x in xs]
        breaks = jenks_breaks(data, 3)
        assert partition_sse(data, breaks) <= brute_force_best_sse(data) + 1e-9


class TestEntropy:
    def test_one_hot_zero(self):
        assert entropy((1, 0, 0, 0, 0)) == 0.0

    def test_uniform_max(self):
        assert entropy([0.2] * 5) == pytest.approx(math.log(5))

    def test_two_way(self):
        assert entropy((0.5, 0.5, 0, 0, 0)) == pytest.approx(math.log(2))

    def test_zero_vector_is_zero(self):
        assert entropy((0, 0, 0, 0, 0)) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            entropy((-0.1, 0.6, 0.5, 0, 0))

    def test_bad_sum_rejected(self):
        with pytest.raises(ValidationError):
            entropy((0.4, 0.4, 0, 0, 0))

    @settings(max_examples=50, deadline=None)
    @given(st.permutations([0.5, 0.3, 0.1, 0.07, 0.03]))
    def test_permutation_invariant(self, perm):
        assert entropy(perm) == pytest.approx(entropy((0.5, 0.3, 0.1, 0.07, 0.03)))
        assert entropy(perm) <= math.log(5) + 1e-12


class TestVectorMetrics:
    def tile(self, **layers):
        return VectorLayerBundle(cell_id="t", side=450.0, **layers)

    def test_no_roads(self):
        report = metrics_from_vector(self.tile())
        assert report.metrics.road_density == 0.0
        assert report.provenance == "vector"

    def test_single_residential_parcel(self):
        bundle = self.tile(land_use=[(box(0, 0, 450, 450), 0)])
        m = metrics_from_vector(bundle).metrics
        assert m.land_use == (1.0, 0, 0, 0, 0)

    def test_height_coverage_arithmetic(self):
        area = 450.0 * 450.0
        low = box(0, 0, 300, 0.2 * area / 300)       # 20% of tile
        mid = box(0, 300, 300, 300 + 0.1 * area / 300)  # 10% of tile
        breaks = JenksBreaks((10.0, 30.0))
        bundle = self.tile(buildings=[(low, 5.0), (mid, 20.0)])
        m = metrics_from_vector(bundle, breaks).metrics
        assert m.height_coverage == pytest.approx((0.2, 0.1, 0.0))
        assert m.open_space == pytest.approx(0.7)

    def test_road_stroke_area(self):
        # One 24 m major road across the tile: area 24*450 of 450^2 = 24/450.
        bundle = self.tile(major_roads=[LineString([(0, 225), (450, 225)])])
        m = metrics_from_vector(bundle, spec=RenderSpec()).metrics
        assert m.road_density == pytest.approx(24.0 / 450.0, abs=1e-3)

    def test_computed_metrics_meet_tight_invariants(self):
        bundle = self.tile(land_use=[(box(0, 0, 200, 200), 0),
                                     (box(200, 0, 450, 200), 3)],
                           buildings=[(box(10, 10, 50, 50), 8.0)])
        m = metrics_from_vector(bundle, JenksBreaks((10.0, 30.0))).metrics
        assert abs(math.fsum(m.land_use) - 1.0) <= 1e-9
        assert abs(math.fsum(m.height_coverage) + m.open_space - 1.0) <= 1e-9


class TestRasterMetrics:
    def test_road_fraction_exact(self):
        cmap = np.zeros((100, 100), np.uint8)
        cmap[:18, :] = int(PixelClass.MAJOR_ROAD)  # exactly 18%
        m = metrics_from_raster(cmap).metrics
        assert m.road_density == pytest.approx(0.18)

    def test_half_residential_half_park(self):
        cmap = np.zeros((100, 100), np.uint8)
        cmap[:, :50] = int(PixelClass.RESIDENTIAL)
        cmap[:, 50:] = int(PixelClass.PARK)
        m = metrics_from_raster(cmap).metrics
        assert m.land_use == pytest.approx((0.5, 0, 0, 0.5, 0))

    def test_all_background_degenerate(self):
        m = metrics_from_raster(np.zeros((32, 32), np.uint8)).metrics
        assert m.land_use == (0.0,) * 5
        assert m.road_density == 0.0
        assert m.open_space == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            metrics_from_raster(np.zeros((0, 0), np.uint8))

    def test_minor_roads_count_as_road(self):
        cmap = np.zeros((10, 10), np.uint8)
        cmap[0, :] = int(PixelClass.MAJOR_ROAD)
        cmap[1, :] = int(PixelClass.MINOR_ROAD)
        cmap[2, :] = int(PixelClass.RAILWAY)  # railway is not road
        assert metrics_from_raster(cmap).metrics.road_density == pytest.approx(0.2)


class TestVectorRasterAgreement:
    def test_rendered_stage1_matches_vector(self, bundle0, breaks0, spec512):
        vec = metrics_from_vector(bundle0, breaks0, spec=spec512).metrics
        ras = metrics_from_raster(classify_image(render_stage1(bundle0, spec512))).metrics
        assert ras.road_density == pytest.approx(vec.road_density, abs=0.02)
        for a, b in zip(ras.land_use, vec.land_use):
            assert a == pytest.approx(b, abs=0.02)
