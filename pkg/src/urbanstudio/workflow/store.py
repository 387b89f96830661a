"""Event-sourced design sessions: set targets, generate alternatives,
select or revise, advance.

Per session, state lives in an append-only JSON-lines event log plus
content-addressed PNG blobs; replaying a log reproduces the state exactly
because live mutations and replay share one reducer. Mutations on a session
are serialized by a per-session lock; distinct sessions proceed in parallel.

Storage layout: ``sessions/{id}/events.jsonl`` and
``sessions/{id}/blobs/{sha256}.png``.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..core import (
    CONSTRAINT_KIND_FOR_STAGE,
    CanonicalImage,
    DesignMetrics,
    ImageKind,
    OUTPUT_KIND_FOR_STAGE,
    TARGET_LAND_USE_SUM_TOL,
)
from ..errors import (
    CorruptLogError,
    InvalidTransitionError,
    ValidationError,
)
from ..evaluator import compliance
from ..genbackend.client import generate_remote
from ..genbackend.procedural import generate_procedural
from ..genbackend.types import GenerationRequest, GenerationResult
from ..prompts import build_for_stage

MAX_ALTERNATIVES = 16
STAGES = (1, 2, 3)
COMPLETED = "completed"

EVENT_KINDS = ("Created", "TargetsSet", "AlternativesGenerated",
               "AlternativeSelected", "RevisionUploaded", "StageAdvanced",
               "Completed")


@dataclass
class StageState:
    targets: DesignMetrics | None = None
    prompt: str | None = None
    alternatives: list[str] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    compliance: list[dict | None] = field(default_factory=list)
    infeasible: list[bool] = field(default_factory=list)
    selected: int | None = None
    revision: str | None = None

    @property
    def forwarded(self) -> str | None:
        """Image fed to the next stage; a revision supersedes the selection."""
        if self.revision is not None:
            return self.revision
        if self.selected is not None:
            return self.alternatives[self.selected]
        return None

    def to_view(self) -> dict:
        return {
            "targets": self.targets.to_dict() if self.targets else None,
            "prompt": self.prompt,
            "alternatives": list(self.alternatives),
            "seeds": list(self.seeds),
            "compliance": list(self.compliance),
            "infeasible": list(self.infeasible),
            "selected": self.selected,
            "revision": self.revision,
            "forwarded": self.forwarded,
        }


@dataclass
class DesignSession:
    id: str
    city: str
    constraint_ref: str
    image_size: int
    backend: dict
    stage: int | str = 1
    stages: dict = field(default_factory=lambda: {s: StageState() for s in STAGES})
    last_seq: int = 0

    def to_view(self) -> dict:
        return {
            "id": self.id,
            "city": self.city,
            "constraint_ref": self.constraint_ref,
            "image_size": self.image_size,
            "backend": self.backend,
            "stage": self.stage,
            "stages": {str(s): st.to_view() for s, st in self.stages.items()},
            "last_seq": self.last_seq,
        }


def _validate_targets(stage: int, metrics: DesignMetrics | None) -> None:
    if stage == 3:
        return  # stage 3 needs no metrics
    if metrics is None:
        raise ValidationError(f"stage {stage} requires target metrics")
    metrics.validate(land_use_sum_tol=TARGET_LAND_USE_SUM_TOL)
    if stage == 1:
        lu_sum = math.fsum(metrics.land_use)
        if lu_sum != 0.0 and abs(lu_sum - 1.0) > TARGET_LAND_USE_SUM_TOL:
            raise ValidationError(f"land-use targets sum to {lu_sum:.4f}")


def _sanitize_float(v: float) -> float | None:
    return None if (v is None or math.isnan(v)) else v


class SessionStore:
    """Persistence plus the stage state machine for design sessions."""

    def __init__(self, root: Path | str, *, default_backend: dict | None = None,
                 sync: bool = True, generator=None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.default_backend = default_backend or {"kind": "procedural"}
        self.sync = sync
        self._generator = generator  # injectable for tests
        self._sessions: dict[str, DesignSession] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._master = threading.Lock()

    # -- paths and blobs ----------------------------------------------------

    def _dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def _events_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "events.jsonl"

    def save_blob(self, session_id: str, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        blob_dir = self._dir(session_id) / "blobs"
        blob_dir.mkdir(parents=True, exist_ok=True)
        path = blob_dir / f"{ref}.png"
        if not path.exists():
            tmp = path.with_suffix(f".{uuid.uuid4().hex}.tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return ref

    def image_bytes(self, session_id: str, ref: str) -> bytes:
        if not ref.isalnum():
            raise ValidationError(f"malformed image ref {ref!r}")
        path = self._dir(session_id) / "blobs" / f"{ref}.png"
        if not path.exists():
            raise KeyError(f"no image {ref} in session {session_id}")
        return path.read_bytes()

    def load_image(self, session_id: str, ref: str, kind: ImageKind) -> CanonicalImage:
        return CanonicalImage.from_png_bytes(self.image_bytes(session_id, ref), kind)

    # -- locking and lookup ---------------------------------------------------

    def _lock(self, session_id: str) -> threading.RLock:
        with self._master:
            return self._locks.setdefault(session_id, threading.RLock())

    def list_sessions(self) -> list[str]:
        base = self.root / "sessions"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir()
                      if (p / "events.jsonl").exists())

    def get(self, session_id: str) -> DesignSession:
        with self._lock(session_id):
            if session_id not in self._sessions:
                if not self._events_path(session_id).exists():
                    raise KeyError(f"no session {session_id}")
                self._sessions[session_id] = self.replay(session_id)
            return self._sessions[session_id]

    # -- event machinery ------------------------------------------------------

    def _append(self, session_id: str, kind: str, payload: dict) -> dict:
        session = self._sessions.get(session_id)
        seq = (session.last_seq if session else 0) + 1
        event = {"seq": seq, "kind": kind, "ts": time.time(), "payload": payload}
        path = self._events_path(session_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        line = (json.dumps(event, sort_keys=True) + "\n").encode()
        with open(path, "ab") as f:
            f.write(line)  # single write keeps the append atomic in practice
            f.flush()
            if self.sync:
                os.fsync(f.fileno())
        return event

    @staticmethod
    def _apply(state: DesignSession | None, event: dict) -> DesignSession:
        kind = event["kind"]
        payload = event["payload"]
        if state is None:
            if kind != "Created":
                raise CorruptLogError(
                    f"first event must be Created, got {kind}", event["seq"])
            state = DesignSession(
                id=payload["id"],
                city=payload["city"],
                constraint_ref=payload["constraint_ref"],
                image_size=payload["image_size"],
                backend=payload["backend"],
            )
            state.last_seq = event["seq"]
            return state

        stage_state = state.stages.get(payload.get("stage"))
        if kind == "TargetsSet":
            stage_state.targets = (DesignMetrics.from_dict(payload["metrics"])
                                   if payload["metrics"] is not None else None)
            stage_state.prompt = payload["prompt"]
        elif kind == "AlternativesGenerated":
            stage_state.alternatives = list(payload["refs"])
            stage_state.seeds = list(payload["seeds"])
            stage_state.compliance = list(payload["compliance"])
            stage_state.infeasible = list(payload["infeasible"])
            stage_state.selected = None
            stage_state.revision = None
        elif kind == "AlternativeSelected":
            stage_state.selected = payload["index"]
        elif kind == "RevisionUploaded":
            stage_state.revision = payload["ref"]
        elif kind == "StageAdvanced":
            state.stage = payload["to"]
        elif kind == "Completed":
            state.stage = COMPLETED
        else:
            raise CorruptLogError(f"unknown event kind {kind}", event["seq"])
        state.last_seq = event["seq"]
        return state

    def replay(self, session_id: str) -> DesignSession:
        """Rebuild session state from its event log alone."""
        path = self._events_path(session_id)
        if not path.exists():
            raise KeyError(f"no session {session_id}")
        state: DesignSession | None = None
        expected = 1
        with open(path, "rb") as f:
            for raw in f:
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    event = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise CorruptLogError(
                        f"malformed event record: {exc}", expected) from exc
                if event.get("seq") != expected:
                    raise CorruptLogError(
                        f"expected seq {expected}, found {event.get('seq')}", expected)
                if event.get("kind") not in EVENT_KINDS:
                    raise CorruptLogError(
                        f"unknown event kind {event.get('kind')!r}", expected)
                try:
                    state = self._apply(state, event)
                except (KeyError, AttributeError, TypeError) as exc:
                    raise CorruptLogError(
                        f"bad payload for {event['kind']}: {exc}", expected) from exc
                expected += 1
        if state is None:
            raise CorruptLogError("empty event log (no Created event)", 1)
        return state

    # -- operations -----------------------------------------------------------

    def create_session(self, city: str, constraint: CanonicalImage,
                       backend: dict | None = None) -> DesignSession:
        if constraint.kind != ImageKind.SITE_CONSTRAINTS:
            raise ValidationError(
                f"sessions start from a site_constraints image, got "
                f"{constraint.kind.value}")
        if not city or not city.strip():
            raise ValidationError("city must be nonempty")
        backend = backend or self.default_backend
        session_id = uuid.uuid4().hex
        with self._lock(session_id):
            ref = self.save_blob(session_id, constraint.to_png_bytes())
            event = self._append(session_id, "Created", {
                "id": session_id, "city": city, "constraint_ref": ref,
                "image_size": constraint.size, "backend": backend,
            })
            self._sessions[session_id] = self._apply(None, event)
            return self._sessions[session_id]

    def set_targets(self, session_id: str, stage, metrics: DesignMetrics | None
                    ) -> DesignSession:
        with self._lock(session_id):
            session = self.get(session_id)
            if session.stage == COMPLETED or stage != session.stage:
                raise InvalidTransitionError(
                    f"cannot set stage-{stage} targets while session is at "
                    f"{session.stage}")
            _validate_targets(stage, metrics)
            prompt = build_for_stage(stage, session.city, metrics)
            event = self._append(session_id, "TargetsSet", {
                "stage": stage,
                "metrics": metrics.to_dict() if metrics is not None else None,
                "prompt": prompt.text,
            })
            self._apply(session, event)
            return session

    def _dispatch(self, request: GenerationRequest, backend: dict) -> GenerationResult:
        if self._generator is not None:
            return self._generator(request, backend)
        kind = backend.get("kind")
        if kind == "procedural":
            return generate_procedural(request)
        if kind == "remote":
            request = replace(request, model_id=backend.get("model_id"))
            return generate_remote(request, backend["endpoint"])
        raise ValidationError(f"unknown backend binding {backend!r}")

    def request_alternatives(self, session_id: str, n: int, seed: int
                             ) -> DesignSession:
        with self._lock(session_id):
            session = self.get(session_id)
            stage = session.stage
            if stage == COMPLETED:
                raise InvalidTransitionError("session is completed")
            if not (1 <= n <= MAX_ALTERNATIVES):
                raise ValidationError(
                    f"n must be in [1, {MAX_ALTERNATIVES}], got {n}")
            stage_state = session.stages[stage]
            if stage != 3 and stage_state.targets is None:
                raise InvalidTransitionError(
                    f"set stage-{stage} targets before generating")

            if stage == 1:
                constraint_ref = session.constraint_ref
            else:
                constraint_ref = session.stages[stage - 1].forwarded
                if constraint_ref is None:  # unreachable behind advance() guard
                    raise InvalidTransitionError(
                        f"stage {stage - 1} has no selection or revision")
            constraint = self.load_image(session_id, constraint_ref,
                                         CONSTRAINT_KIND_FOR_STAGE[stage])
            prompt = stage_state.prompt
            if prompt is None:
                prompt = build_for_stage(stage, session.city, None).text

            request = GenerationRequest(stage=stage, constraint=constraint,
                                        prompt=prompt, num_samples=n, seed=seed)
            # Generation and evaluation happen before any event is appended:
            # a backend failure leaves the session untouched.
            result = self._dispatch(request, session.backend)

            refs, snapshots = [], []
            for image, meta in zip(result.images, result.metadata):
                refs.append(self.save_blob(session_id, image.to_png_bytes()))
                if stage in (1, 2) and stage_state.targets is not None:
                    report = compliance([(stage_state.targets, image)], stage)
                    snapshots.append({
                        "groups": {g: {"mae": s.mae, "rmse": s.rmse}
                                   for g, s in report.groups.items()},
                    })
                else:
                    snapshots.append(None)
            event = self._append(session_id, "AlternativesGenerated", {
                "stage": stage, "n": n, "seed": seed, "refs": refs,
                "seeds": result.seeds,
                "model_id": result.model_id,
                "compliance": snapshots,
                "infeasible": [bool(m.get("infeasible", False))
                               for m in result.metadata],
            })
            self._apply(session, event)
            return session

    def select_alternative(self, session_id: str, index: int) -> DesignSession:
        with self._lock(session_id):
            session = self.get(session_id)
            if session.stage == COMPLETED:
                raise InvalidTransitionError("session is completed")
            stage_state = session.stages[session.stage]
            if not isinstance(index, int) or isinstance(index, bool):
                raise ValidationError(f"index must be an integer, got {index!r}")
            if not (0 <= index < len(stage_state.alternatives)):
                raise ValidationError(
                    f"index {index} out of range for "
                    f"{len(stage_state.alternatives)} alternatives")
            event = self._append(session_id, "AlternativeSelected",
                                 {"stage": session.stage, "index": index})
            self._apply(session, event)
            return session

    def upload_revision(self, session_id: str, image: CanonicalImage | bytes
                        ) -> DesignSession:
        with self._lock(session_id):
            session = self.get(session_id)
            if session.stage == COMPLETED:
                raise InvalidTransitionError("session is completed")
            expected_kind = OUTPUT_KIND_FOR_STAGE[session.stage]
            if isinstance(image, bytes):
                try:
                    image = CanonicalImage.from_png_bytes(image, expected_kind)
                except Exception as exc:
                    raise ValidationError(f"revision is not a valid PNG: {exc}")
            elif image.kind != expected_kind:
                raise ValidationError(
                    f"stage {session.stage} revisions must be "
                    f"{expected_kind.value}, got {image.kind.value}")
            if image.size != session.image_size:
                raise ValidationError(
                    f"revision is {image.size}px, session uses "
                    f"{session.image_size}px")
            ref = self.save_blob(session_id, image.to_png_bytes())
            event = self._append(session_id, "RevisionUploaded",
                                 {"stage": session.stage, "ref": ref})
            self._apply(session, event)
            return session

    def advance(self, session_id: str) -> DesignSession:
        with self._lock(session_id):
            session = self.get(session_id)
            if session.stage == COMPLETED:
                raise InvalidTransitionError("session is completed (terminal)")
            stage_state = session.stages[session.stage]
            if stage_state.forwarded is None:
                raise InvalidTransitionError(
                    f"stage {session.stage} needs a selection or revision "
                    "before advancing")
            if session.stage == 3:
                event = self._append(session_id, "Completed", {"stage": 3})
            else:
                event = self._append(session_id, "StageAdvanced", {
                    "stage": session.stage,
                    "from": session.stage, "to": session.stage + 1,
                })
            self._apply(session, event)
            return session
