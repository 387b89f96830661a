"""Shared domain types: pixel classes, the color palette, canonical images
and design metrics.

The palette is the single source of truth for rendering and for decoding
generated images back to classes. Decoding is total nearest-neighbor (no
reject class) so that anti-aliased or noisy generated images still yield a
full class assignment for compliance measurement.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np
from PIL import Image

from .errors import ValidationError

DEFAULT_IMAGE_SIZE = 512

# Sum tolerance for metrics computed from data (type invariant).
METRIC_SUM_ATOL = 1e-9
# Looser tolerance for user-entered / prompt-derived land-use targets, whose
# printed percentages may not total 100 (rounded one-decimal values).
TARGET_LAND_USE_SUM_TOL = 0.05


class LandUseCategory(IntEnum):
    RESIDENTIAL = 0
    COMMERCIAL = 1
    MANUFACTURING = 2
    PARK = 3
    MIXED_USE = 4


class HeightClass(IntEnum):
    LOW_STORY = 0
    MEDIUM_STORY = 1
    HIGH_STORY = 2


class PixelClass(IntEnum):
    BACKGROUND = 0
    WATER = 1
    RAILWAY = 2
    MAJOR_ROAD = 3
    MINOR_ROAD = 4
    RESIDENTIAL = 5
    COMMERCIAL = 6
    MANUFACTURING = 7
    PARK = 8
    MIXED_USE = 9
    BUILDING_LOW = 10
    BUILDING_MID = 11
    BUILDING_HIGH = 12


LAND_USE_TO_PIXEL = {
    LandUseCategory.RESIDENTIAL: PixelClass.RESIDENTIAL,
    LandUseCategory.COMMERCIAL: PixelClass.COMMERCIAL,
    LandUseCategory.MANUFACTURING: PixelClass.MANUFACTURING,
    LandUseCategory.PARK: PixelClass.PARK,
    LandUseCategory.MIXED_USE: PixelClass.MIXED_USE,
}

HEIGHT_TO_PIXEL = {
    HeightClass.LOW_STORY: PixelClass.BUILDING_LOW,
    HeightClass.MEDIUM_STORY: PixelClass.BUILDING_MID,
    HeightClass.HIGH_STORY: PixelClass.BUILDING_HIGH,
}

LAND_USE_PIXELS = tuple(LAND_USE_TO_PIXEL.values())
BUILDING_PIXELS = tuple(HEIGHT_TO_PIXEL.values())
ROAD_PIXELS = (PixelClass.MAJOR_ROAD, PixelClass.MINOR_ROAD)

# Grays form a 0/51/102/153/204/255 ladder so that every pair of palette
# colors keeps Euclidean distance >= 80 (asserted below at import).
PALETTE: dict[PixelClass, tuple[int, int, int]] = {
    PixelClass.BACKGROUND: (255, 255, 255),
    PixelClass.WATER: (0, 112, 255),
    PixelClass.RAILWAY: (139, 69, 19),
    PixelClass.MAJOR_ROAD: (0, 0, 0),
    PixelClass.MINOR_ROAD: (102, 102, 102),
    PixelClass.RESIDENTIAL: (255, 255, 0),
    PixelClass.COMMERCIAL: (255, 0, 0),
    PixelClass.MANUFACTURING: (160, 32, 240),
    PixelClass.PARK: (0, 176, 80),
    PixelClass.MIXED_USE: (255, 165, 0),
    PixelClass.BUILDING_LOW: (204, 204, 204),
    PixelClass.BUILDING_MID: (153, 153, 153),
    PixelClass.BUILDING_HIGH: (51, 51, 51),
}

PALETTE_VERSION = 1
MIN_PALETTE_DISTANCE = 80.0

# (13, 3) array ordered by class id; row index == PixelClass value.
PALETTE_ARRAY = np.array([PALETTE[PixelClass(i)] for i in range(len(PixelClass))],
                         dtype=np.uint8)


def _assert_palette_valid() -> None:
    classes = list(PixelClass)
    assert len(classes) == 13
    assert len(LandUseCategory) == 5
    assert len(HeightClass) == 3
    assert len({PALETTE[c] for c in classes}) == len(classes), "palette not injective"
    for i, a in enumerate(classes):
        for b in classes[i + 1:]:
            d = math.dist(PALETTE[a], PALETTE[b])
            assert d >= MIN_PALETTE_DISTANCE, f"{a.name}-{b.name} distance {d:.1f} < 80"


_assert_palette_valid()

# Within this radius of a palette color the nearest neighbor is unambiguous.
DECODE_THRESHOLD = MIN_PALETTE_DISTANCE / 2


class ImageKind(str, Enum):
    SITE_CONSTRAINTS = "site_constraints"
    STAGE1_PLAN = "stage1_plan"
    STAGE2_PLAN = "stage2_plan"
    SATELLITE = "satellite"


# Which image kind conditions each generation stage, and which kind it emits.
CONSTRAINT_KIND_FOR_STAGE = {
    1: ImageKind.SITE_CONSTRAINTS,
    2: ImageKind.STAGE1_PLAN,
    3: ImageKind.STAGE2_PLAN,
    "combined": ImageKind.SITE_CONSTRAINTS,
}
OUTPUT_KIND_FOR_STAGE = {
    1: ImageKind.STAGE1_PLAN,
    2: ImageKind.STAGE2_PLAN,
    3: ImageKind.SATELLITE,
    "combined": ImageKind.STAGE2_PLAN,
}


@dataclass(eq=False)
class CanonicalImage:
    """Fixed-size RGB raster for one of the four canonical kinds.

    ``pixels`` is a (H, W, 3) uint8 array; images are always square.
    ``tile_id`` anchors the image to a grid cell when known.
    """

    kind: ImageKind
    pixels: np.ndarray
    tile_id: str | None = None

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"expected (H, W, 3) pixel buffer, got {px.shape}")
        if px.shape[0] != px.shape[1]:
            raise ValidationError(f"canonical images are square, got {px.shape[:2]}")
        if px.shape[0] == 0:
            raise ValidationError("empty image")
        self.pixels = px

    @property
    def size(self) -> int:
        return int(self.pixels.shape[0])

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes, kind: ImageKind,
                       tile_id: str | None = None) -> "CanonicalImage":
        img = Image.open(io.BytesIO(data)).convert("RGB")
        return cls(kind=kind, pixels=np.asarray(img, dtype=np.uint8), tile_id=tile_id)


@dataclass(frozen=True)
class DesignMetrics:
    """The prompt-controllable quantities of one tile.

    ``land_use`` is proportions over land-use-assigned area (sums to 1, or is
    the all-zero vector when the tile has no land use). ``height_coverage``
    plus ``open_space`` partition the tile area, so they sum to 1.
    """

    road_density: float = 0.0
    land_use: tuple[float, float, float, float, float] = (0.0,) * 5
    height_coverage: tuple[float, float, float] = (0.0, 0.0, 0.0)
    open_space: float = 1.0

    def validate(self, *, land_use_sum_tol: float = METRIC_SUM_ATOL) -> "DesignMetrics":
        """Check ranges and sum constraints; returns self for chaining.

        ``land_use_sum_tol`` is widened for prompt-derived targets, whose
        rounded percentages may not total exactly 100.
        """
        comps = [self.road_density, *self.land_use, *self.height_coverage, self.open_space]
        for v in comps:
            if not (-1e-12 <= v <= 1 + 1e-12):
                raise ValidationError(f"metric component {v} outside [0, 1]")
        lu_sum = math.fsum(self.land_use)
        if lu_sum != 0.0 and abs(lu_sum - 1.0) > land_use_sum_tol:
            raise ValidationError(
                f"land-use proportions sum to {lu_sum:.6f}, expected 0 or 1")
        h_sum = math.fsum(self.height_coverage) + self.open_space
        if abs(h_sum - 1.0) > 1e-6:
            raise ValidationError(
                f"height coverage + open space sums to {h_sum:.6f}, expected 1")
        return self

    def to_dict(self) -> dict:
        return {
            "road_density": self.road_density,
            "land_use": list(self.land_use),
            "height_coverage": list(self.height_coverage),
            "open_space": self.open_space,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DesignMetrics":
        known = {"road_density", "land_use", "height_coverage", "open_space"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown metric keys: {sorted(unknown)}")
        m = cls(
            road_density=float(d.get("road_density", 0.0)),
            land_use=tuple(float(v) for v in d.get("land_use", (0.0,) * 5)),
            height_coverage=tuple(float(v) for v in d.get("height_coverage", (0.0,) * 3)),
            open_space=float(d.get("open_space", 1.0)),
        )
        if len(m.land_use) != 5:
            raise ValidationError("land_use must have 5 components")
        if len(m.height_coverage) != 3:
            raise ValidationError("height_coverage must have 3 components")
        return m


def encode_class(pixel_class: PixelClass) -> tuple[int, int, int]:
    """Palette color of a class. Total over all 13 classes."""
    return PALETTE[PixelClass(pixel_class)]


def decode_color(rgb) -> PixelClass:
    """Nearest palette class of any RGB triple; ties go to the lower class id."""
    v = np.asarray(rgb, dtype=np.int64)
    d2 = np.sum((PALETTE_ARRAY.astype(np.int64) - v) ** 2, axis=1)
    return PixelClass(int(np.argmin(d2)))  # argmin keeps the first (lowest) id on ties


def classify_image(image: CanonicalImage | np.ndarray) -> np.ndarray:
    """Per-pixel nearest-palette-class map (H, W) of uint8 class ids."""
    px = image.pixels if isinstance(image, CanonicalImage) else np.asarray(image)
    if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] == 0 or px.shape[1] == 0:
        raise ValidationError(f"expected nonempty (H, W, 3) buffer, got {px.shape}")
    flat = px.reshape(-1, 3).astype(np.int32)
    # Squared distance to each of the 13 palette colors; argmin ties resolve
    # to the lowest class id because PALETTE_ARRAY is ordered by id.
    pal = PALETTE_ARRAY.astype(np.int32)
    d2 = np.einsum("ij,ij->i", flat, flat)[:, None] \
        - 2 * flat @ pal.T + np.einsum("ij,ij->i", pal, pal)[None, :]
    return np.argmin(d2, axis=1).astype(np.uint8).reshape(px.shape[:2])


def colorize_class_map(class_map: np.ndarray) -> np.ndarray:
    """Inverse of classify_image for exact class maps: (H, W) ids -> RGB."""
    return PALETTE_ARRAY[np.asarray(class_map, dtype=np.uint8)]


def palette_conformance(image: CanonicalImage | np.ndarray,
                        threshold: float = DECODE_THRESHOLD) -> float:
    """Fraction of pixels within ``threshold`` of some palette color."""
    px = image.pixels if isinstance(image, CanonicalImage) else np.asarray(image)
    flat = px.reshape(-1, 3).astype(np.int32)
    pal = PALETTE_ARRAY.astype(np.int32)
    d2 = np.einsum("ij,ij->i", flat, flat)[:, None] \
        - 2 * flat @ pal.T + np.einsum("ij,ij->i", pal, pal)[None, :]
    return float(np.mean(np.min(d2, axis=1) <= threshold * threshold))


def palette_document() -> dict:
    """Versioned palette description shared with the UI and remote adapters."""
    roles = {}
    for lu, pc in LAND_USE_TO_PIXEL.items():
        roles[pc] = f"land_use:{lu.name.lower()}"
    for hc, pc in HEIGHT_TO_PIXEL.items():
        roles[pc] = f"building:{hc.name.lower()}"
    roles.update({
        PixelClass.BACKGROUND: "background",
        PixelClass.WATER: "constraint:water",
        PixelClass.RAILWAY: "constraint:railway",
        PixelClass.MAJOR_ROAD: "road:major",
        PixelClass.MINOR_ROAD: "road:minor",
    })
    return {
        "version": PALETTE_VERSION,
        "min_distance": MIN_PALETTE_DISTANCE,
        "classes": [
            {"name": c.name, "id": int(c), "rgb": list(PALETTE[c]), "role": roles[c]}
            for c in PixelClass
        ],
    }
