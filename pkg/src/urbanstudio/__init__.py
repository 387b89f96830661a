"""urbanstudio: stepwise urban-design workbench.

Converts city geodata into canonical conditioning images, prompts and design
metrics; orchestrates a three-stage human-in-the-loop generation workflow
against pluggable backends; and evaluates outputs for fidelity, instruction
compliance and diversity.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CanonicalImage,
    DesignMetrics,
    HeightClass,
    ImageKind,
    LandUseCategory,
    PixelClass,
    classify_image,
    decode_color,
    encode_class,
)
