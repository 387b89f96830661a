"""Uniform generation contract: deterministic procedural backend, remote
client for the wire protocol, and the protocol service itself."""

from .types import GenerationRequest, GenerationResult, HealthStatus
from .procedural import generate_procedural
from .client import generate_remote, health

__all__ = [
    "GenerationRequest",
    "GenerationResult",
    "HealthStatus",
    "generate_procedural",
    "generate_remote",
    "health",
]
