import numpy as np
import pytest

from statetrack.backend import EMBED_NORM_TOL, CandidateMaskTriple, Tubelet
from statetrack.backend.scenarios import (
    make_distractor_scene,
    make_no_event_scene,
    make_split_scene,
)
from statetrack.backend.simulator import (
    AppearanceChangeEvent,
    Keyframe,
    NewObjectEvent,
    ObjectSpec,
    Scenario,
    SplitEvent,
    dilate,
    load_scenario,
    scenario_from_json,
    scenario_to_json,
    simulate,
)
from statetrack.errors import ValidationError
from statetrack.maskcore import BinaryMask, FrameSize, intersection_area, mask_to_text


def rect(oid, class_id, text, cx, cy, w, h, frame=0):
    return ObjectSpec(oid, class_id, text, "rect", (Keyframe(frame, cx, cy, w, h),))


def two_object_scene(**kwargs):
    defaults = dict(
        size=FrameSize(32, 32),
        num_frames=6,
        prompt_object="a",
        objects=(rect("a", 1, "apple", 8, 8, 6, 6), rect("b", 2, "bowl", 24, 24, 8, 8)),
        events=(),
    )
    defaults.update(kwargs)
    return Scenario(**defaults)


def split_scene(frag_dx=7.0, k=3, **kwargs):
    parent = rect("a", 1, "apple", 10, 10, 8, 8)
    frag = ObjectSpec(
        "p", 1, "apple piece", "rect", (Keyframe(k, 10 + frag_dx, 10, 4, 4),)
    )
    defaults = dict(
        size=FrameSize(32, 32),
        num_frames=8,
        prompt_object="a",
        objects=(parent, rect("b", 2, "bowl", 26, 26, 6, 6)),
        events=(SplitEvent("a", k, "cut", (frag,)),),
    )
    defaults.update(kwargs)
    return Scenario(**defaults)


class TestSegmentEntities:
    def test_disjoint_rectangles_match_gt(self):
        backend, gt = simulate(two_object_scene(), 0)
        entities = backend.segment_entities(0)
        assert len(entities) == 2
        assert set(map(mask_to_text, entities)) == {
            mask_to_text(gt.object_mask("a", 0)),
            mask_to_text(gt.object_mask("b", 0)),
        }

    def test_empty_frame(self):
        scn = Scenario(
            size=FrameSize(16, 16),
            num_frames=4,
            prompt_object="a",
            objects=(rect("a", 1, "apple", 8, 8, 4, 4),),
            events=(NewObjectEvent("a", 2),),
        )
        backend, _ = simulate(scn, 0)
        assert backend.segment_entities(0) == []
        assert backend.segment_entities(1) == []
        assert len(backend.segment_entities(2)) == 1

    def test_overlap_resolved_larger_wins(self):
        scn = Scenario(
            size=FrameSize(16, 16),
            num_frames=2,
            prompt_object="big",
            objects=(
                rect("big", 1, "apple", 8, 8, 8, 8),
                rect("small", 2, "bowl", 11, 8, 4, 4),  # overlaps big's right side
            ),
        )
        backend, gt = simulate(scn, 0)
        entities = backend.segment_entities(0)
        big = gt.object_mask("big", 0)
        assert len(entities) == 2
        assert entities[0] == big  # larger kept whole
        assert intersection_area(entities[0], entities[1]) == 0
        assert entities[1].area < gt.object_mask("small", 0).area

    def test_frame_out_of_range(self):
        backend, _ = simulate(two_object_scene(), 0)
        with pytest.raises(ValueError):
            backend.segment_entities(6)


class TestTrack:
    def test_follows_gt_without_events(self):
        scn = two_object_scene(
            objects=(
                ObjectSpec(
                    "a", 1, "apple", "rect", (Keyframe(0, 8, 8, 6, 6), Keyframe(5, 14, 10, 6, 6))
                ),
                rect("b", 2, "bowl", 24, 24, 8, 8),
            )
        )
        backend, gt = simulate(scn, 0)
        tub = backend.track(0, gt.object_mask("a", 0))
        assert tub.start_frame == 0 and tub.end_frame == 5
        for t in range(6):
            assert tub.mask_at(t) == gt.object_mask("a", t)

    def test_split_excludes_fragment(self):
        backend, gt = simulate(split_scene(), 0)
        tub = backend.track(0, gt.object_mask("a", 0))
        for t in range(8):
            assert tub.mask_at(t) == gt.object_mask("a", t)  # parent remnant only
            frag = gt.object_mask("p", t)
            if frag is not None:
                assert intersection_area(tub.mask_at(t), frag) == 0

    def test_fragment_track_started_after_split_keeps_it(self):
        backend, gt = simulate(split_scene(), 0)
        tub = backend.track(3, gt.object_mask("p", 3))
        for t in range(3, 8):
            assert tub.mask_at(t) == gt.object_mask("p", t)

    def test_candidates_are_dilations(self):
        scn = split_scene()
        backend, gt = simulate(scn, 0)
        tub = backend.track(0, gt.object_mask("a", 0))

        def dilate_oracle(arr, r):
            h, w = arr.shape
            out = np.zeros_like(arr)
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    src = arr[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
                    out[max(0, dy) : h + min(0, dy), max(0, dx) : w + min(0, dx)] |= src
            return out

        for t in (0, 3, 7):
            triple = tub.candidates_at(t)
            assert triple.m1 == tub.mask_at(t)
            assert triple.m2.array.tolist() == dilate_oracle(triple.m1.array, scn.dilate_r1).tolist()
            assert triple.m3.array.tolist() == dilate_oracle(triple.m1.array, scn.dilate_r2).tolist()

    def test_candidate_nesting(self):
        backend, gt = simulate(split_scene(), 0)
        tub = backend.track(0, gt.object_mask("a", 0))
        for t in range(8):
            triple = tub.candidates_at(t)
            assert intersection_area(triple.m1, triple.m2) == triple.m1.area
            assert intersection_area(triple.m2, triple.m3) == triple.m2.area

    def test_empty_query_rejected(self):
        backend, _ = simulate(two_object_scene(), 0)
        with pytest.raises(ValueError):
            backend.track(0, BinaryMask.empty(backend.frame_size))


class TestEmbed:
    def test_same_object_adjacent_frames(self):
        backend, gt = simulate(two_object_scene(), 0)
        e0 = backend.embed(0, gt.object_mask("a", 0))
        e1 = backend.embed(1, gt.object_mask("a", 1))
        assert e0.dot(e1) >= 0.95

    def test_different_classes_nearly_orthogonal(self):
        backend, gt = simulate(two_object_scene(), 0)
        ea = backend.embed(0, gt.object_mask("a", 0))
        eb = backend.embed(0, gt.object_mask("b", 0))
        assert abs(ea.dot(eb)) <= 0.3

    def test_sigma_zero_gives_exact_basis(self):
        backend, gt = simulate(two_object_scene(embed_sigma=0.0), 0)
        e = backend.embed(0, gt.object_mask("a", 0))
        expected = np.zeros(8)
        expected[1] = 1.0
        assert np.array_equal(e.values, expected)

    def test_unit_norm(self):
        backend, gt = simulate(two_object_scene(), 5)
        for t in range(3):
            e = backend.embed(t, gt.object_mask("a", t))
            assert abs(np.linalg.norm(e.values) - 1.0) <= EMBED_NORM_TOL

    def test_deterministic_in_seed(self):
        scn = two_object_scene()
        b1, gt = simulate(scn, 9)
        b2, _ = simulate(scn, 9)
        b3, _ = simulate(scn, 10)
        m = gt.object_mask("a", 1)
        assert np.array_equal(b1.embed(1, m).values, b2.embed(1, m).values)
        assert not np.array_equal(b1.embed(1, m).values, b3.embed(1, m).values)

    def test_appearance_change_shifts_embedding_slightly(self):
        scn = two_object_scene(
            num_frames=6, events=(AppearanceChangeEvent("a", 3),), embed_sigma=0.0
        )
        backend, gt = simulate(scn, 0)
        before = backend.embed(2, gt.object_mask("a", 2))
        after = backend.embed(3, gt.object_mask("a", 3))
        assert before.dot(after) < 1.0  # shifted
        assert before.dot(after) > 0.9  # but still the same class

    def test_explicit_appearance_array(self):
        obj = ObjectSpec(
            "a", 1, "apple", "rect", (Keyframe(0, 8, 8, 6, 6),), appearance=(0, 0, 1, 1)
        )
        scn = two_object_scene(
            num_frames=4, objects=(obj,), events=(), embed_sigma=0.0
        )
        backend, gt = simulate(scn, 0)
        e1 = backend.embed(1, gt.object_mask("a", 1))
        e2 = backend.embed(2, gt.object_mask("a", 2))
        assert e1.dot(e2) < 1.0
        bad = ObjectSpec("a", 1, "apple", "rect", (Keyframe(0, 8, 8, 6, 6),), appearance=(0,))
        with pytest.raises(ValidationError):
            simulate(two_object_scene(num_frames=4, objects=(bad,)), 0)

    def test_empty_mask_rejected(self):
        backend, _ = simulate(two_object_scene(), 0)
        with pytest.raises(ValueError):
            backend.embed(0, BinaryMask.empty(backend.frame_size))


class TestDescribe:
    def test_split_passthrough(self):
        backend, gt = simulate(split_scene(), 0)
        parent = gt.object_mask("a", 3)
        frag = gt.object_mask("p", 3)
        desc = backend.describe(0, 3, [gt.object_mask("a", 0)], [parent, frag])
        assert desc.action_verb == "cut"
        assert desc.objects == ((0, "apple"), (1, "apple piece"))

    def test_fallback_unknown_verb(self):
        backend, gt = simulate(two_object_scene(), 0)
        desc = backend.describe(0, 2, [gt.object_mask("a", 0)], [gt.object_mask("b", 2)])
        assert desc.action_verb == "unknown"
        assert desc.objects == ((0, "bowl"),)

    def test_preconditions(self):
        backend, gt = simulate(two_object_scene(), 0)
        m = gt.object_mask("a", 0)
        with pytest.raises(ValueError):
            backend.describe(2, 2, [m], [m])
        with pytest.raises(ValueError):
            backend.describe(0, 2, [], [m])


class TestSimulate:
    def test_no_event_ground_truth(self):
        backend, gt = simulate(two_object_scene(), 0)
        assert gt.annotation.transformations == ()
        for t in range(6):
            assert gt.lineage_masks[t] == gt.object_mask("a", t)

    def test_split_annotation(self):
        scn = split_scene(k=3, grace_frames=2)
        backend, gt = simulate(scn, 0)
        assert len(gt.annotation.transformations) == 1
        tr = gt.annotation.transformations[0]
        assert (tr.t_s, tr.t_e, tr.verb) == (3, 5, "cut")
        assert len(tr.objects) == 1
        assert tr.objects[0].mask == gt.object_mask("p", 5)
        assert tr.objects[0].text == "apple piece"

    def test_lineage_includes_fragments(self):
        backend, gt = simulate(split_scene(k=3), 0)
        m = gt.lineage_masks[5]
        assert intersection_area(m, gt.object_mask("p", 5)) == gt.object_mask("p", 5).area
        assert intersection_area(m, gt.object_mask("a", 5)) == gt.object_mask("a", 5).area
        assert intersection_area(m, gt.object_mask("b", 5)) == 0

    def test_grace_clipped_to_video_end(self):
        scn = split_scene(k=6, grace_frames=5)  # 8 frames: t_e would be 11
        _, gt = simulate(scn, 0)
        assert gt.annotation.transformations[0].t_e == 7

    def test_validation_errors(self):
        with pytest.raises(ValidationError):
            simulate(two_object_scene(prompt_object="nope"), 0)
        with pytest.raises(ValidationError):  # event frame out of range
            simulate(split_scene(k=0), 0)
        with pytest.raises(ValidationError):  # fragment too far from parent
            simulate(split_scene(frag_dx=25.0), 0)
        with pytest.raises(ValidationError):  # duplicate ids
            simulate(
                two_object_scene(objects=(rect("a", 1, "x", 4, 4, 2, 2), rect("a", 1, "x", 9, 9, 2, 2))),
                0,
            )
        with pytest.raises(ValidationError):  # class out of embedding range
            simulate(two_object_scene(objects=(rect("a", 9, "x", 8, 8, 4, 4),)), 0)


class TestScenarioJson:
    def test_round_trip(self):
        for scn in (make_split_scene(4), make_distractor_scene(2), make_no_event_scene(7)):
            again = scenario_from_json(scenario_to_json(scn))
            assert again == scn

    def test_load_errors(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ValidationError):
            load_scenario(p)
        p.write_text("{}")
        with pytest.raises(ValidationError):
            load_scenario(p)


def test_dilate_zero_radius_is_identity():
    m = BinaryMask.from_array(np.eye(5, dtype=bool))
    assert dilate(m, 0) is m


def test_tubelet_invariant_enforced():
    size = FrameSize(4, 4)
    a = BinaryMask.full(size)
    b = BinaryMask.empty(size)
    with pytest.raises(ValueError):
        Tubelet("x", 0, [a], [CandidateMaskTriple(b, b, b)])
