"""Request/result types shared by all generation backends."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import CONSTRAINT_KIND_FOR_STAGE, CanonicalImage
from ..errors import ValidationError

PROCEDURAL_MODEL_ID = "procedural-v1"

_MASK64 = (1 << 64) - 1


@dataclass
class GenerationRequest:
    """One generation call; the constraint image kind must match the stage."""

    stage: int | str
    constraint: CanonicalImage
    prompt: str
    num_samples: int = 1
    seed: int = 0
    model_id: str | None = None
    timeout: float = 120.0
    sampler_overrides: dict | None = None

    def validate(self) -> "GenerationRequest":
        if self.stage not in CONSTRAINT_KIND_FOR_STAGE:
            raise ValidationError(f"unknown stage {self.stage!r}")
        expected = CONSTRAINT_KIND_FOR_STAGE[self.stage]
        if self.constraint.kind != expected:
            raise ValidationError(
                f"stage {self.stage} requires a {expected.value} constraint, "
                f"got {self.constraint.kind.value}")
        if self.num_samples < 1:
            raise ValidationError(f"num_samples must be >= 1, got {self.num_samples}")
        if not self.prompt:
            raise ValidationError("prompt must be nonempty")
        if self.timeout <= 0:
            raise ValidationError(f"timeout must be positive, got {self.timeout}")
        return self

    def sample_seed(self, index: int) -> int:
        return (int(self.seed) + index) & _MASK64


@dataclass
class GenerationResult:
    """Images plus per-image backend metadata (model id, seed, latency)."""

    images: list[CanonicalImage]
    metadata: list[dict] = field(default_factory=list)
    model_id: str = ""

    @property
    def seeds(self) -> list[int]:
        return [m.get("seed", 0) for m in self.metadata]


@dataclass(frozen=True)
class HealthStatus:
    status: str
    models: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return self.status == "ok"
