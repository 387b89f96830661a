"""Three-dimensional evaluation: instruction compliance (entropy-weighted
errors), visual fidelity (Frechet distance over pluggable features), and
design diversity.

Entropy weighting applies only to land-use compliance; a floor weight of
0.01 keeps zero-entropy samples from vanishing. R-squared is not clamped and
may be negative. Frechet numbers from the built-in class-grid extractor are
labeled with the extractor id and are not comparable to scores from neural
feature spaces.
"""

from __future__ import annotations

import base64
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import requests

from .core import CanonicalImage, DesignMetrics, PixelClass, classify_image
from .errors import ProtocolError, ValidationError
from .metrics import entropy, metrics_from_raster

LAND_USE_WEIGHT_FLOOR = 0.01

STAGE_GROUPS = {
    1: ("road_density", "land_use"),
    2: ("building_height", "open_space"),
    "combined": ("road_density", "land_use", "building_height", "open_space"),
}


@dataclass(frozen=True)
class GroupScore:
    rmse: float
    mae: float
    r2: float

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae,
                "r2": None if math.isnan(self.r2) else self.r2}


@dataclass(frozen=True)
class ComplianceReport:
    stage: int | str
    groups: dict[str, GroupScore]
    n: int
    weighting: str = "land_use:entropy+0.01"

    def to_dict(self) -> dict:
        return {"stage": self.stage, "n": self.n, "weighting": self.weighting,
                "groups": {g: s.to_dict() for g, s in self.groups.items()}}


@dataclass
class FeatureSet:
    """n x d matrix of per-image feature vectors."""

    features: np.ndarray
    extractor: str = "classgrid"

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got {self.features.shape}")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True)
class DiversityReport:
    mean: float
    matrix: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "n": self.n, "matrix": self.matrix.tolist()}


def _weighted_scores(errors, weights, targets) -> GroupScore:
    e = np.asarray(errors, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    wsum = float(w.sum())
    num = float(np.sum(w * e * e))
    rmse = math.sqrt(num / wsum)
    mae = float(np.sum(w * np.abs(e)) / wsum)
    ybar = float(np.sum(w * y) / wsum)
    denom = float(np.sum(w * (y - ybar) ** 2))
    if num < 1e-15:
        r2 = 1.0
    elif denom < 1e-15:
        r2 = float("nan")  # constant targets: R-squared undefined
    else:
        r2 = 1.0 - num / denom
    return GroupScore(rmse=rmse, mae=mae, r2=r2)


def _land_use_weight(target: DesignMetrics) -> float:
    vec = np.asarray(target.land_use, dtype=np.float64)
    total = float(vec.sum())
    # Prompt-derived targets may total slightly under 1; renormalize for the
    # entropy weight only.
    h = entropy(vec / total) if total > 0 else 0.0
    return h + LAND_USE_WEIGHT_FLOOR


def compliance(pairs, stage) -> ComplianceReport:
    """Entropy-weighted RMSE/MAE/R2 of measured-vs-target metrics.

    ``pairs`` is a list of (target DesignMetrics, image) with images decodable
    to class maps. Stage 1 scores road density and land use, stage 2 building
    height and open space, "combined" all four.
    """
    if stage not in STAGE_GROUPS:
        raise ValidationError(f"no compliance metric groups for stage {stage!r}")
    if not pairs:
        raise ValidationError("compliance needs at least one (target, image) pair")

    measured = []
    for _target, image in pairs:
        cmap = image if isinstance(image, np.ndarray) else classify_image(image)
        measured.append(metrics_from_raster(cmap).metrics)

    obs: dict[str, tuple[list, list, list]] = {g: ([], [], [])
                                               for g in STAGE_GROUPS[stage]}
    for (target, _), got in zip(pairs, measured):
        if "road_density" in obs:
            e, w, y = obs["road_density"]
            e.append(got.road_density - target.road_density)
            w.append(1.0)
            y.append(target.road_density)
        if "land_use" in obs:
            weight = _land_use_weight(target)
            e, w, y = obs["land_use"]
            for m_c, t_c in zip(got.land_use, target.land_use):
                e.append(m_c - t_c)
                w.append(weight)
                y.append(t_c)
        if "building_height" in obs:
            e, w, y = obs["building_height"]
            for m_c, t_c in zip(got.height_coverage, target.height_coverage):
                e.append(m_c - t_c)
                w.append(1.0)
                y.append(t_c)
        if "open_space" in obs:
            e, w, y = obs["open_space"]
            e.append(got.open_space - target.open_space)
            w.append(1.0)
            y.append(target.open_space)

    groups = {g: _weighted_scores(*vals) for g, vals in obs.items()}
    return ComplianceReport(stage=stage, groups=groups, n=len(pairs))


# ---------------------------------------------------------------------------
# Features and Frechet distance

def default_features(image: CanonicalImage | np.ndarray) -> np.ndarray:
    """Deterministic 208-dim feature: per-class pixel fractions in 4x4 blocks."""
    cmap = image if isinstance(image, np.ndarray) and image.ndim == 2 \
        else classify_image(image)
    h, w = cmap.shape
    rows = np.array_split(np.arange(h), 4)
    cols = np.array_split(np.arange(w), 4)
    out = np.empty(16 * len(PixelClass), dtype=np.float64)
    k = 0
    for r in rows:
        for c in cols:
            block = cmap[np.ix_(r, c)]
            counts = np.bincount(block.ravel().astype(np.int64),
                                 minlength=len(PixelClass))
            out[k:k + len(PixelClass)] = counts / block.size
            k += len(PixelClass)
    return out


def feature_set(images, extractor: str = "classgrid") -> FeatureSet:
    return FeatureSet(np.stack([default_features(img) for img in images]),
                      extractor=extractor)


def remote_features(images, endpoint: str, *,
                    session: requests.Session | None = None,
                    timeout: float = 120.0) -> FeatureSet:
    """Fetch canonical neural features from an adapter's /v1/features endpoint."""
    if session is None:
        session = requests.Session()
    payload = {"images_png_b64": [
        base64.b64encode(img.to_png_bytes()).decode("ascii") for img in images]}
    resp = session.post(endpoint.rstrip("/") + "/v1/features", json=payload,
                        timeout=timeout)
    if resp.status_code != 200:
        raise ProtocolError(f"features endpoint returned HTTP {resp.status_code}: "
                            f"{resp.text[:200]}")
    body = resp.json()
    feats = body.get("features")
    if not isinstance(feats, list) or len(feats) != len(payload["images_png_b64"]):
        raise ProtocolError("features missing or wrong length")
    return FeatureSet(np.asarray(feats, dtype=np.float64),
                      extractor=str(body.get("extractor", "remote")))


def _sym_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    """||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa Sb)^1/2), covariances regularized.

    The matrix square root uses the symmetric form Sa^1/2 Sb Sa^1/2 with
    negative eigenvalues clamped to zero; the result is clamped to zero.
    """
    if a.dim != b.dim:
        raise ValidationError(f"feature dims differ: {a.dim} vs {b.dim}")
    if a.n < 2 or b.n < 2:
        raise ValidationError("Frechet statistics need at least 2 samples per set")
    mu_a = a.features.mean(axis=0)
    mu_b = b.features.mean(axis=0)
    reg = 1e-6 * np.eye(a.dim)
    cov_a = np.cov(a.features, rowvar=False) + reg
    cov_b = np.cov(b.features, rowvar=False) + reg

    sqrt_a = _sym_sqrt(cov_a)
    inner = sqrt_a @ cov_b @ sqrt_a
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    trace_sqrt = float(np.sum(np.sqrt(vals)))

    fd = float(np.sum((mu_a - mu_b) ** 2)
               + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)
    return max(0.0, fd)


# ---------------------------------------------------------------------------
# Diversity

def diversity(images) -> DiversityReport:
    """Mean pairwise fraction of pixels whose decoded classes differ."""
    if len(images) < 2:
        raise ValidationError("diversity needs at least 2 images")
    cmaps = []
    for img in images:
        cmap = img if isinstance(img, np.ndarray) and img.ndim == 2 \
            else classify_image(img)
        cmaps.append(cmap)
    shape = cmaps[0].shape
    for cmap in cmaps[1:]:
        if cmap.shape != shape:
            raise ValidationError(f"image sizes differ: {cmap.shape} vs {shape}")
    n = len(cmaps)
    matrix = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.mean(cmaps[i] != cmaps[j]))
            matrix[i, j] = matrix[j, i] = d
    mean = float(matrix[np.triu_indices(n, k=1)].mean())
    return DiversityReport(mean=mean, matrix=matrix, n=n)


# ---------------------------------------------------------------------------
# Report emitters (groups x {RMSE, MAE, R2})

_GROUP_TITLES = {
    "road_density": "Road density",
    "land_use": "Land use",
    "building_height": "Building height",
    "open_space": "Open space",
}


def report_rows(report: ComplianceReport) -> list[dict]:
    rows = []
    for group, score in report.groups.items():
        rows.append({"group": _GROUP_TITLES.get(group, group),
                     **score.to_dict()})
    return rows


def report_text(report: ComplianceReport) -> str:
    lines = [f"{'':<16}{'RMSE':>8}{'MAE':>8}{'R2':>8}"]
    for row in report_rows(report):
        r2 = "n/a" if row["r2"] is None else f"{row['r2']:.2f}"
        lines.append(f"{row['group']:<16}{row['rmse']:>8.3f}{row['mae']:>8.3f}{r2:>8}")
    lines.append(f"n = {report.n}, weighting = {report.weighting}")
    return "\n".join(lines)


def report_csv(report: ComplianceReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["group", "rmse", "mae", "r2"])
    writer.writeheader()
    for row in report_rows(report):
        writer.writerow(row)
    return buf.getvalue()
