import base64
import copy
import json
import random

import numpy as np
import pytest

from urbanstudio.core import (
    CanonicalImage,
    DesignMetrics,
    ImageKind,
    classify_image,
    colorize_class_map,
)
from urbanstudio.errors import (
    CorruptLogError,
    InvalidTransitionError,
    ValidationError,
)
from urbanstudio.genbackend.types import GenerationResult
from urbanstudio.metrics import metrics_from_raster
from urbanstudio.synth import (
    sample_stage1_targets,
    sample_stage2_targets,
    synthetic_site,
)
from urbanstudio.workflow.store import COMPLETED, SessionStore

SITE = synthetic_site(seed=1, size=128)
BASE_ROAD = metrics_from_raster(classify_image(SITE)).metrics.road_density


def store(tmp_path, **kwargs):
    kwargs.setdefault("sync", False)
    return SessionStore(tmp_path / "data", **kwargs)


def stage1_targets(seed=0):
    return sample_stage1_targets(np.random.default_rng(seed), BASE_ROAD)


def run_stage(s, session_id, stage, seed=0):
    if stage == 1:
        s.set_targets(session_id, 1, stage1_targets(seed))
    elif stage == 2:
        s.set_targets(session_id, 2, sample_stage2_targets(np.random.default_rng(seed)))
    s.request_alternatives(session_id, n=2, seed=seed)
    s.select_alternative(session_id, 0)
    s.advance(session_id)


class TestCreate:
    def test_create_starts_at_stage1(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        assert session.stage == 1
        assert session.city == "Synth"
        assert session.constraint_ref

    def test_wrong_kind_rejected(self, tmp_path):
        s = store(tmp_path)
        wrong = CanonicalImage(ImageKind.STAGE1_PLAN, SITE.pixels)
        with pytest.raises(ValidationError):
            s.create_session("Synth", wrong)

    def test_distinct_ids(self, tmp_path):
        s = store(tmp_path)
        a = s.create_session("Synth", SITE)
        b = s.create_session("Synth", SITE)
        assert a.id != b.id


class TestTargets:
    def test_golden_metrics_store_golden_prompt(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("New York", SITE)
        metrics = DesignMetrics(road_density=0.18,
                                land_use=(0.792, 0.154, 0.0, 0.036, 0.0))
        s.set_targets(session.id, 1, metrics)
        expected = (
            "[Location and map guide] Land use types and road network map of "
            "New York. [Land use composition] Land use parcels include 79.2% "
            "of residential, 15.4% of commercial, 0.0% of industrial, 3.6% of "
            "park, 0.0% of mixed use. [Road density] Road density is 18.0%.")
        assert s.get(session.id).stages[1].prompt == expected

    def test_stage_mismatch_rejected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        with pytest.raises(InvalidTransitionError):
            s.set_targets(session.id, 2, sample_stage2_targets(
                np.random.default_rng(0)))

    def test_bad_land_use_sum_rejected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        with pytest.raises(ValidationError):
            s.set_targets(session.id, 1, DesignMetrics(
                road_density=0.1, land_use=(0.4, 0.2, 0.1, 0.05, 0.05)))


class TestAlternatives:
    def test_generation_with_compliance_snapshots(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(3))
        s.request_alternatives(session.id, n=3, seed=9)
        state = s.get(session.id).stages[1]
        assert len(state.alternatives) == 3
        assert all(snap and "groups" in snap for snap in state.compliance)
        for snap in state.compliance:
            assert snap["groups"]["road_density"]["mae"] <= 0.02
            assert snap["groups"]["land_use"]["mae"] <= 0.03

    def test_requires_targets_first(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        with pytest.raises(InvalidTransitionError):
            s.request_alternatives(session.id, n=1, seed=0)

    def test_n_bounds(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(1))
        for n in (0, 17, -1):
            with pytest.raises(ValidationError):
                s.request_alternatives(session.id, n=n, seed=0)

    def test_deterministic_given_seed(self, tmp_path):
        s = store(tmp_path)
        a = s.create_session("Synth", SITE)
        b = s.create_session("Synth", SITE)
        s.set_targets(a.id, 1, stage1_targets(7))
        s.set_targets(b.id, 1, stage1_targets(7))
        s.request_alternatives(a.id, n=2, seed=4)
        s.request_alternatives(b.id, n=2, seed=4)
        refs_a = s.get(a.id).stages[1].alternatives
        refs_b = s.get(b.id).stages[1].alternatives
        assert refs_a == refs_b  # content-addressed: identical images

    def test_backend_failure_leaves_session_untouched(self, tmp_path):
        def failing_generator(request, backend):
            raise RuntimeError("backend exploded")
        s = store(tmp_path, generator=failing_generator)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(2))
        before = copy.deepcopy(s.get(session.id).to_view())
        with pytest.raises(RuntimeError):
            s.request_alternatives(session.id, n=1, seed=0)
        assert s.get(session.id).to_view() == before
        assert s.replay(session.id).to_view() == before


class TestSelectReviseAdvance:
    def test_select_and_advance(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(4))
        s.request_alternatives(session.id, n=2, seed=1)
        s.select_alternative(session.id, 1)
        assert s.get(session.id).stages[1].selected == 1
        s.advance(session.id)
        assert s.get(session.id).stage == 2

    def test_select_out_of_range(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(5))
        s.request_alternatives(session.id, n=2, seed=1)
        with pytest.raises(ValidationError):
            s.select_alternative(session.id, 9)

    def test_revision_supersedes_selection(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        s.set_targets(session.id, 1, stage1_targets(6))
        s.request_alternatives(session.id, n=2, seed=1)
        s.select_alternative(session.id, 0)
        revision = CanonicalImage(ImageKind.STAGE1_PLAN,
                                  colorize_class_map(np.zeros((128, 128), np.uint8)))
        s.upload_revision(session.id, revision)
        state = s.get(session.id).stages[1]
        assert state.revision is not None
        assert state.forwarded == state.revision

    def test_revision_wrong_size_rejected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        bad = CanonicalImage(ImageKind.STAGE1_PLAN,
                             colorize_class_map(np.zeros((64, 64), np.uint8)))
        with pytest.raises(ValidationError):
            s.upload_revision(session.id, bad)

    def test_revision_wrong_kind_rejected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        bad = CanonicalImage(ImageKind.STAGE2_PLAN,
                             colorize_class_map(np.zeros((128, 128), np.uint8)))
        with pytest.raises(ValidationError):
            s.upload_revision(session.id, bad)

    def test_advance_without_selection(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        with pytest.raises(InvalidTransitionError):
            s.advance(session.id)

    def test_full_happy_path(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        for stage in (1, 2, 3):
            run_stage(s, session.id, stage, seed=stage)
        final = s.get(session.id)
        assert final.stage == COMPLETED
        forwarded = [final.stages[i].forwarded for i in (1, 2, 3)]
        assert all(forwarded)

    def test_completed_is_terminal(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        for stage in (1, 2, 3):
            run_stage(s, session.id, stage, seed=stage)
        for op in (lambda: s.advance(session.id),
                   lambda: s.request_alternatives(session.id, 1, 0),
                   lambda: s.select_alternative(session.id, 0)):
            with pytest.raises(InvalidTransitionError):
                op()


class TestReplay:
    def test_replay_equals_live_state(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        run_stage(s, session.id, 1, seed=1)
        run_stage(s, session.id, 2, seed=2)
        live = s.get(session.id)
        replayed = s.replay(session.id)
        assert replayed == live
        assert replayed.to_view() == live.to_view()

    def test_fresh_store_reads_same_state(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        run_stage(s, session.id, 1, seed=3)
        other = SessionStore(tmp_path / "data", sync=False)
        assert other.get(session.id).to_view() == s.get(session.id).to_view()

    def test_gap_detected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        run_stage(s, session.id, 1, seed=1)
        path = s._events_path(session.id)
        lines = path.read_text().strip().splitlines()
        events = [json.loads(line) for line in lines]
        kept = [e for e in events if e["seq"] != 2]
        path.write_text("".join(json.dumps(e) + "\n" for e in kept))
        with pytest.raises(CorruptLogError) as err:
            s.replay(session.id)
        assert err.value.sequence == 2

    def test_empty_log_rejected(self, tmp_path):
        s = store(tmp_path)
        session_dir = s.root / "sessions" / "ghost"
        session_dir.mkdir(parents=True)
        (session_dir / "events.jsonl").write_text("")
        with pytest.raises(CorruptLogError):
            s.replay("ghost")

    def test_malformed_line_rejected(self, tmp_path):
        s = store(tmp_path)
        session = s.create_session("Synth", SITE)
        path = s._events_path(session.id)
        path.write_text(path.read_text() + "{broken json\n")
        with pytest.raises(CorruptLogError):
            s.replay(session.id)


def _stub_backend(request, backend):
    rng = np.random.default_rng(request.seed)
    images, meta = [], []
    from urbanstudio.core import OUTPUT_KIND_FOR_STAGE
    for i in range(request.num_samples):
        cmap = rng.integers(0, 13, (request.constraint.size,
                                    request.constraint.size)).astype(np.uint8)
        images.append(CanonicalImage(OUTPUT_KIND_FOR_STAGE[request.stage],
                                     colorize_class_map(cmap)))
        meta.append({"model_id": "stub", "seed": request.sample_seed(i),
                     "infeasible": False})
    return GenerationResult(images=images, metadata=meta, model_id="stub")


class TestStateMachineSafety:
    """Random operation sequences never reach an illegal state and every
    rejected operation leaves the state unchanged."""

    OPS = ("set_targets_1", "set_targets_2", "set_targets_wrong", "generate",
           "select_ok", "select_bad", "revise", "advance")

    def run_random_sequence(self, s, rng, session_id):
        tiny = CanonicalImage(ImageKind.STAGE1_PLAN,
                              colorize_class_map(np.zeros((64, 64), np.uint8)))
        for _ in range(rng.randint(3, 10)):
            op = rng.choice(self.OPS)
            session = s.get(session_id)
            before = copy.deepcopy(session.to_view())
            try:
                if op == "set_targets_1":
                    s.set_targets(session_id, 1, stage1_targets(rng.randint(0, 99)))
                elif op == "set_targets_2":
                    s.set_targets(session_id, 2, sample_stage2_targets(
                        np.random.default_rng(rng.randint(0, 99))))
                elif op == "set_targets_wrong":
                    s.set_targets(session_id, 3, None)
                elif op == "generate":
                    s.request_alternatives(session_id, n=rng.randint(1, 2),
                                           seed=rng.randint(0, 99))
                elif op == "select_ok":
                    s.select_alternative(session_id, 0)
                elif op == "select_bad":
                    s.select_alternative(session_id, 99)
                elif op == "revise":
                    expected = s.get(session_id)
                    from urbanstudio.core import OUTPUT_KIND_FOR_STAGE
                    if expected.stage == COMPLETED:
                        s.upload_revision(session_id, tiny)
                    else:
                        img = CanonicalImage(
                            OUTPUT_KIND_FOR_STAGE[expected.stage],
                            colorize_class_map(
                                np.zeros((expected.image_size,) * 2, np.uint8)))
                        s.upload_revision(session_id, img)
                elif op == "advance":
                    s.advance(session_id)
            except (ValidationError, InvalidTransitionError):
                after = s.get(session_id).to_view()
                assert after == before, f"rejected {op} mutated state"
            self.assert_legal(s.get(session_id))

    def assert_legal(self, session):
        assert session.stage in (1, 2, 3, COMPLETED)
        for stage, state in session.stages.items():
            if state.selected is not None:
                assert 0 <= state.selected < len(state.alternatives)
        if session.stage == 2:
            assert session.stages[1].forwarded is not None
        if session.stage == 3:
            assert session.stages[2].forwarded is not None
        if session.stage == COMPLETED:
            assert session.stages[3].forwarded is not None

    def test_many_random_sequences(self, tmp_path):
        s = store(tmp_path, generator=_stub_backend)
        rng = random.Random(12345)
        site64 = CanonicalImage(ImageKind.SITE_CONSTRAINTS,
                                colorize_class_map(np.zeros((64, 64), np.uint8)))
        for _ in range(300):
            session = s.create_session("Synth", site64)
            self.run_random_sequence(s, rng, session.id)
