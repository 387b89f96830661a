"""Reference generation backend for the urbanstudio v1 wire protocol.

Ships three pieces: a training entry point over (constraint, target, prompt)
manifests, a serving endpoint implementing POST /v1/generate and GET /healthz,
and a POST /v1/features endpoint returning pooled InceptionV3 activations.

Diffusion math is never reimplemented here: full-scale generation delegates
to upstream ControlNet/Stable Diffusion tooling (optional extra), while the
built-in tiny engine exists to validate data plumbing and protocol
conformance at desk scale.
"""

__version__ = "0.1.0"
