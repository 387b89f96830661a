import math

import numpy as np
import pytest

from urbanstudio.core import (
    CanonicalImage,
    DesignMetrics,
    ImageKind,
    PixelClass,
    colorize_class_map,
)
from urbanstudio.errors import ValidationError
from urbanstudio.evaluator import (
    ComplianceReport,
    FeatureSet,
    compliance,
    default_features,
    diversity,
    feature_set,
    frechet_distance,
    report_csv,
    report_rows,
    report_text,
)

LN5 = math.log(5)


def image_from_map(cmap, kind=ImageKind.STAGE1_PLAN):
    return CanonicalImage(kind, colorize_class_map(cmap))


def stage1_image(road_frac, land_use, size=100):
    """Class map with exact road and land-use pixel fractions."""
    cmap = np.zeros((size, size), np.uint8)
    road_rows = int(round(road_frac * size))
    cmap[:road_rows, :] = int(PixelClass.MAJOR_ROAD)
    remaining = size - road_rows
    lu_pixels = [int(round(f * remaining * size)) for f in land_use]
    flat = cmap[road_rows:, :].ravel()
    pos = 0
    for frac_idx, count in enumerate(lu_pixels):
        flat[pos:pos + count] = int(
            [PixelClass.RESIDENTIAL, PixelClass.COMMERCIAL, PixelClass.MANUFACTURING,
             PixelClass.PARK, PixelClass.MIXED_USE][frac_idx])
        pos += count
    cmap[road_rows:, :] = flat.reshape(remaining, size)
    return image_from_map(cmap)


class TestCompliance:
    def test_perfect_match(self):
        target = DesignMetrics(road_density=0.2, land_use=(0.5, 0.5, 0, 0, 0))
        img = stage1_image(0.2, (0.5, 0.5, 0, 0, 0))
        report = compliance([(target, img)] * 3, stage=1)
        for score in report.groups.values():
            assert score.rmse == pytest.approx(0.0, abs=1e-12)
            assert score.mae == pytest.approx(0.0, abs=1e-12)
            assert score.r2 == 1.0

    def test_rmse_at_least_mae(self):
        pairs = []
        for road, err in ((0.1, 0.05), (0.3, -0.02), (0.2, 0.0)):
            target = DesignMetrics(road_density=road)
            pairs.append((target, stage1_image(road + err, (0,) * 5)))
        report = compliance(pairs, stage=1)
        s = report.groups["road_density"]
        assert s.rmse >= s.mae >= 0
        assert s.r2 <= 1

    def test_measured_equals_mean_gives_r2_zero(self):
        # Targets 0.1 and 0.3; both measurements at the mean 0.2.
        pairs = [
            (DesignMetrics(road_density=0.1), stage1_image(0.2, (0,) * 5)),
            (DesignMetrics(road_density=0.3), stage1_image(0.2, (0,) * 5)),
        ]
        report = compliance(pairs, stage=1)
        assert report.groups["road_density"].r2 == pytest.approx(0.0, abs=1e-6)

    def test_entropy_weighting_hand_computed(self):
        # Sample A: one-hot target (weight 0.01); sample B: uniform target
        # (weight ln5 + 0.01). Equal raw land-use errors in both samples.
        one_hot = (1.0, 0, 0, 0, 0)
        uniform = (0.2,) * 5
        measured_a = (0.9, 0.1, 0, 0, 0)   # |e| = (0.1, 0.1, 0, 0, 0)
        measured_b = (0.3, 0.1, 0.2, 0.2, 0.2)  # |e| = (0.1, 0.1, 0, 0, 0)
        img_a = stage1_image(0.0, measured_a)
        img_b = stage1_image(0.0, measured_b)
        pairs = [(DesignMetrics(land_use=one_hot), img_a),
                 (DesignMetrics(land_use=uniform), img_b)]
        report = compliance(pairs, stage=1)
        w_a, w_b = 0.01, LN5 + 0.01
        expected_mae = (w_a * 0.2 + w_b * 0.2) / (5 * (w_a + w_b))
        assert report.groups["land_use"].mae == pytest.approx(expected_mae, abs=1e-4)
        # The uniform-target sample dominates by factor (ln5 + 0.01)/0.01.
        assert w_b / w_a == pytest.approx((LN5 + 0.01) / 0.01)

    def test_duplicate_sample_leaves_unweighted_groups_unchanged(self):
        pairs = [
            (DesignMetrics(road_density=0.1), stage1_image(0.15, (0,) * 5)),
            (DesignMetrics(road_density=0.3), stage1_image(0.25, (0,) * 5)),
        ]
        base = compliance(pairs, stage=1).groups["road_density"]
        doubled = compliance(pairs + pairs, stage=1).groups["road_density"]
        assert doubled.rmse == pytest.approx(base.rmse)
        assert doubled.mae == pytest.approx(base.mae)
        assert doubled.r2 == pytest.approx(base.r2)

    def test_stage2_groups(self):
        cmap = np.zeros((100, 100), np.uint8)
        cmap[:10, :] = int(PixelClass.BUILDING_LOW)
        cmap[10:15, :] = int(PixelClass.BUILDING_MID)
        img = image_from_map(cmap, ImageKind.STAGE2_PLAN)
        target = DesignMetrics(height_coverage=(0.1, 0.05, 0.0), open_space=0.85)
        report = compliance([(target, img)], stage=2)
        assert set(report.groups) == {"building_height", "open_space"}
        assert report.groups["open_space"].mae == pytest.approx(0.0, abs=1e-9)

    def test_stage3_rejected(self):
        target = DesignMetrics()
        img = stage1_image(0.1, (0,) * 5)
        with pytest.raises(ValidationError):
            compliance([(target, img)], stage=3)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            compliance([], stage=1)

    def test_report_emitters(self):
        target = DesignMetrics(road_density=0.2, land_use=(1, 0, 0, 0, 0))
        report = compliance([(target, stage1_image(0.2, (1, 0, 0, 0, 0)))], stage=1)
        assert isinstance(report, ComplianceReport)
        rows = report_rows(report)
        assert {r["group"] for r in rows} == {"Road density", "Land use"}
        text = report_text(report)
        assert "RMSE" in text and "Road density" in text
        csv_text = report_csv(report)
        assert csv_text.splitlines()[0] == "group,rmse,mae,r2"
        doc = report.to_dict()
        assert doc["n"] == 1 and "groups" in doc


class TestDefaultFeatures:
    def test_uniform_background(self):
        img = image_from_map(np.zeros((64, 64), np.uint8))
        vec = default_features(img)
        assert vec.shape == (208,)
        background_slots = vec[int(PixelClass.BACKGROUND)::13]
        assert (background_slots == 1.0).all()
        assert vec.sum() == pytest.approx(16.0)

    def test_left_water_right_park(self):
        cmap = np.zeros((64, 64), np.uint8)
        cmap[:, :32] = int(PixelClass.WATER)
        cmap[:, 32:] = int(PixelClass.PARK)
        vec = default_features(image_from_map(cmap))
        blocks = vec.reshape(16, 13)
        for row in range(4):
            for col in range(4):
                expected = PixelClass.WATER if col < 2 else PixelClass.PARK
                assert blocks[row * 4 + col][int(expected)] == 1.0

    def test_position_sensitive(self):
        a = np.zeros((64, 64), np.uint8)
        a[:16, :16] = int(PixelClass.WATER)
        b = np.zeros((64, 64), np.uint8)
        b[-16:, -16:] = int(PixelClass.WATER)
        va = default_features(image_from_map(a))
        vb = default_features(image_from_map(b))
        assert not np.array_equal(va, vb)
        assert sorted(va.tolist()) == sorted(vb.tolist())


class TestFrechet:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(0)
        fs = FeatureSet(rng.normal(0, 1, (64, 8)))
        assert frechet_distance(fs, fs) <= 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a = FeatureSet(rng.normal(0, 1, (40, 6)))
        b = FeatureSet(rng.normal(0.5, 1.2, (40, 6)))
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a),
                                                       abs=1e-6)

    def test_row_permutation_invariant(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0, 1, (30, 5))
        b = rng.normal(1, 1, (30, 5))
        perm = rng.permutation(30)
        d1 = frechet_distance(FeatureSet(a), FeatureSet(b))
        d2 = frechet_distance(FeatureSet(a[perm]), FeatureSet(b[perm]))
        assert d1 == pytest.approx(d2, abs=1e-9)

    def test_univariate_gaussian_fixture(self):
        # Closed form for N(0,1) vs N(1,1): (mu1-mu2)^2 + (s1-s2)^2 = 1.
        rng = np.random.default_rng(123)
        a = FeatureSet(rng.normal(0.0, 1.0, (100_000, 1)))
        b = FeatureSet(rng.normal(1.0, 1.0, (100_000, 1)))
        assert frechet_distance(a, b) == pytest.approx(1.0, abs=0.05)

    def test_diagonal_closed_form(self):
        # Orthogonal +-1 design gives exactly diagonal sample covariance, so
        # the closed form sum_i (mu_ai-mu_bi)^2 + (s_ai-s_bi)^2 is exact.
        h = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1],
                      [-1, -1, -1], [-1, 1, 1], [1, -1, 1], [1, 1, -1]], float)
        a = h * np.array([1.0, 2.0, 0.5]) + np.array([0.0, 1.0, -1.0])
        b = h * np.array([1.5, 1.0, 1.0]) + np.array([1.0, 1.0, 0.0])
        s_a, s_b = a.std(0, ddof=1), b.std(0, ddof=1)
        closed = float(np.sum((a.mean(0) - b.mean(0)) ** 2) + np.sum((s_a - s_b) ** 2))
        assert frechet_distance(FeatureSet(a), FeatureSet(b)) == pytest.approx(
            closed, abs=1e-3)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            frechet_distance(FeatureSet(np.zeros((3, 2))), FeatureSet(np.zeros((3, 3))))

    def test_small_n_rejected(self):
        with pytest.raises(ValidationError):
            frechet_distance(FeatureSet(np.zeros((1, 2))), FeatureSet(np.zeros((5, 2))))

    def test_feature_set_pipeline(self):
        images = [image_from_map(np.zeros((64, 64), np.uint8)) for _ in range(3)]
        fs = feature_set(images)
        assert fs.n == 3 and fs.dim == 208 and fs.extractor == "classgrid"


class TestDiversity:
    def test_identical_images_zero(self):
        img = image_from_map(np.zeros((64, 64), np.uint8))
        report = diversity([img, img, img])
        assert report.mean == 0.0
        assert report.n == 3
        assert np.array_equal(report.matrix, report.matrix.T)
        assert (np.diag(report.matrix) == 0).all()

    def test_all_water_vs_all_park(self):
        water = image_from_map(np.full((32, 32), int(PixelClass.WATER), np.uint8))
        park = image_from_map(np.full((32, 32), int(PixelClass.PARK), np.uint8))
        assert diversity([water, park]).mean == 1.0

    def test_quarter_perturbed_pair(self):
        rng = np.random.default_rng(9)
        cmap = rng.integers(0, 5, (100, 100)).astype(np.uint8)
        other = cmap.copy()
        flat = other.ravel()
        chosen = rng.choice(flat.size, size=flat.size // 4, replace=False)
        flat[chosen] = (flat[chosen] + 5) % 13  # guaranteed different class
        report = diversity([image_from_map(cmap), image_from_map(other)])
        assert report.mean == pytest.approx(0.25, abs=0.001)

    def test_permutation_invariant_mean(self):
        rng = np.random.default_rng(10)
        images = [image_from_map(rng.integers(0, 13, (32, 32)).astype(np.uint8))
                  for _ in range(4)]
        base = diversity(images).mean
        assert diversity(images[::-1]).mean == pytest.approx(base)

    def test_size_mismatch_rejected(self):
        a = image_from_map(np.zeros((32, 32), np.uint8))
        b = image_from_map(np.zeros((64, 64), np.uint8))
        with pytest.raises(ValidationError):
            diversity([a, b])

    def test_single_image_rejected(self):
        with pytest.raises(ValidationError):
            diversity([image_from_map(np.zeros((8, 8), np.uint8))])
