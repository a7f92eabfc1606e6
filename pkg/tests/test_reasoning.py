import dataclasses

import numpy as np
import pytest

from helpers import ScriptedBackend, rect_mask, track_of
from statetrack.backend import CandidateMaskTriple, Tubelet
from statetrack.backend.scenarios import make_distractor_scene, make_split_scene
from statetrack.backend.simulator import simulate
from statetrack.maskcore import BinaryMask, FrameSize
from statetrack.partition import build_partition
from statetrack.reasoning import (
    ReasoningConfig,
    filter_candidates,
    semantic_consistency,
    spatial_proximity,
)

SIZE = FrameSize(8, 8)


def prompt_with_candidates(at_frame_1):
    """Two-frame prompt track with crafted candidate masks at frame 1."""
    m0 = rect_mask(SIZE, 0, 0, 2, 2)
    m1, m2, m3 = at_frame_1
    return Tubelet(
        "prompt",
        0,
        [m0, m1],
        [CandidateMaskTriple(m0, m0, m0), CandidateMaskTriple(m1, m2, m3)],
    )


class TestSpatialProximity:
    def test_disjoint_is_zero(self):
        prompt = prompt_with_candidates([rect_mask(SIZE, 0, 0, 2, 2)] * 3)
        cand = track_of("c", 1, [rect_mask(SIZE, 5, 5, 2, 2)])
        assert spatial_proximity(cand, prompt) == 0.0

    def test_subset_of_one_candidate_is_one(self):
        big = rect_mask(SIZE, 0, 0, 8, 8)
        prompt = prompt_with_candidates(
            [rect_mask(SIZE, 0, 0, 2, 2), rect_mask(SIZE, 0, 0, 4, 4), big]
        )
        cand = track_of("c", 1, [rect_mask(SIZE, 5, 5, 2, 2)])
        assert spatial_proximity(cand, prompt) == 1.0

    def test_overlap_fractions(self):
        seed = rect_mask(SIZE, 0, 0, 4, 1)  # area 4 along the top row
        m1 = rect_mask(SIZE, 0, 0, 1, 1)  # overlap 1
        m2 = rect_mask(SIZE, 0, 0, 2, 1)  # overlap 2
        m3 = rect_mask(SIZE, 1, 0, 3, 1)  # overlap 3
        prompt = prompt_with_candidates([m1, m2, m3])
        cand = track_of("c", 1, [seed])
        assert spatial_proximity(cand, prompt) == 0.75

    def test_prompt_missing_frame_errors(self):
        prompt = track_of("p", 0, [rect_mask(SIZE, 0, 0, 2, 2)])  # spans frame 0 only
        cand = track_of("c", 1, [rect_mask(SIZE, 4, 4, 2, 2)])
        with pytest.raises(ValueError):
            spatial_proximity(cand, prompt)

    def test_candidate_must_start_late(self):
        prompt = prompt_with_candidates([rect_mask(SIZE, 0, 0, 2, 2)] * 3)
        cand = track_of("c", 0, [rect_mask(SIZE, 4, 4, 2, 2), rect_mask(SIZE, 4, 4, 2, 2)])
        with pytest.raises(ValueError):
            spatial_proximity(cand, prompt)


class TestSemanticConsistency:
    def _sim_pool(self, scn, seed):
        backend, gt = simulate(scn, seed)
        pool = build_partition(backend, gt.object_mask("target", 0))
        return backend, pool

    def test_same_class_sigma_zero_is_exactly_one(self):
        scn = make_split_scene(0)
        scn = dataclasses.replace(scn, embed_sigma=0.0)
        backend, pool = self._sim_pool(scn, 0)
        cand = pool.late_emergent()[0]
        assert semantic_consistency(cand, pool.prompt_tubelet, backend) == 1.0

    def test_orthogonal_class_sigma_zero_is_zero(self):
        scn = make_distractor_scene(0)
        scn = dataclasses.replace(scn, embed_sigma=0.0)
        backend, pool = self._sim_pool(scn, 0)
        hand = [t for t in pool.late_emergent() if t.start_frame == scn.events[1].frame]
        assert semantic_consistency(hand[0], pool.prompt_tubelet, backend) == 0.0

    def test_noisy_same_class_matches_bruteforce(self):
        for seed in range(5):
            scn = make_split_scene(seed)
            backend, pool = self._sim_pool(scn, seed)
            prompt = pool.prompt_tubelet
            cand = pool.late_emergent()[0]
            value = semantic_consistency(cand, prompt, backend)
            assert value >= 0.9
            s = cand.start_frame
            best = -2.0
            for i in range(0, s):
                pm = prompt.mask_at(i)
                if pm is None or pm.area == 0:
                    continue
                for j in range(s, backend.num_frames):
                    cm = cand.mask_at(j)
                    if cm is None or cm.area == 0:
                        continue
                    dot = float(
                        backend.embed(i, pm).values @ backend.embed(j, cm).values
                    )
                    best = max(best, dot)
            assert value == pytest.approx(best, abs=1e-12)

    def test_empty_prompt_frames_excluded(self):
        a = rect_mask(SIZE, 0, 0, 2, 2)
        empty = BinaryMask.empty(SIZE)
        prompt = track_of("p", 0, [a, empty, a, a])
        cand = track_of("c", 2, [rect_mask(SIZE, 4, 4, 2, 2), empty])
        backend = ScriptedBackend(SIZE, 4, {})
        # would raise inside embed() if empty frames were embedded
        assert semantic_consistency(cand, prompt, backend) == 1.0

    def test_degenerate_prompt_errors(self):
        empty = BinaryMask.empty(SIZE)
        prompt = track_of("p", 0, [empty, empty, rect_mask(SIZE, 0, 0, 2, 2)])
        cand = track_of("c", 1, [rect_mask(SIZE, 4, 4, 2, 2), rect_mask(SIZE, 4, 4, 2, 2)])
        backend = ScriptedBackend(SIZE, 3, {})
        with pytest.raises(ValueError):
            semantic_consistency(cand, prompt, backend)

    def test_embed_stride_subsample_includes_endpoints(self):
        a = rect_mask(SIZE, 0, 0, 2, 2)
        b = rect_mask(SIZE, 4, 4, 2, 2)
        v_hit = np.array([1.0, 0.0, 0.0, 0.0])
        v_miss = np.array([0.0, 1.0, 0.0, 0.0])
        backend = ScriptedBackend(
            SIZE,
            6,
            {},
            embeddings={
                (0, a): v_hit, (1, a): v_miss, (2, a): v_miss,
                (3, b): v_hit, (4, b): v_miss, (5, b): v_miss,
            },
        )
        prompt = track_of("p", 0, [a] * 6)
        cand = track_of("c", 3, [b] * 3)
        # stride 3 keeps only frames {0} and {3}: both endpoints, dot = 1
        value = semantic_consistency(cand, prompt, backend, ReasoningConfig(embed_stride=3))
        assert value == 1.0


class TestFilterCandidates:
    def test_no_candidates(self):
        backend = ScriptedBackend(SIZE, 3, {0: []})
        pool = build_partition(backend, rect_mask(SIZE, 0, 0, 2, 2))
        valid, scores = filter_candidates(pool, backend)
        assert valid == [] and scores == []

    def test_split_fragment_accepted(self):
        scn = make_split_scene(8)
        backend, gt = simulate(scn, 8)
        pool = build_partition(backend, gt.object_mask("target", 0))
        valid, scores = filter_candidates(pool, backend)
        assert len(valid) == 1
        assert scores[0].accepted
        assert scores[0].s_prox > 0.3
        assert scores[0].s_sem >= 0.9

    def test_distractor_rejected_on_semantics(self):
        scn = make_distractor_scene(8)
        backend, gt = simulate(scn, 8)
        pool = build_partition(backend, gt.object_mask("target", 0))
        valid, scores = filter_candidates(pool, backend)
        rejected = [s for s in scores if not s.accepted]
        assert len(rejected) == 1
        assert rejected[0].s_prox > 0.3
        assert rejected[0].s_sem <= 0.3
        assert len(valid) == 1

    def test_threshold_monotonicity_and_intersection(self):
        scn = make_distractor_scene(3)
        backend, gt = simulate(scn, 3)
        pool = build_partition(backend, gt.object_mask("target", 0))

        def accepted_ids(**kw):
            valid, _ = filter_candidates(pool, backend, ReasoningConfig(**kw))
            return {t.id for t in valid}

        base = accepted_ids()
        assert accepted_ids(tau_prox=0.5) <= base
        assert accepted_ids(tau_sem=0.95) <= base
        only_prox = accepted_ids(tau_sem=-1.0)
        only_sem = accepted_ids(tau_prox=0.0)
        assert base == only_prox & only_sem

    def test_ablation_flags(self):
        scn = make_distractor_scene(4)
        backend, gt = simulate(scn, 4)
        pool = build_partition(backend, gt.object_mask("target", 0))
        valid_all, scores_all = filter_candidates(
            pool, backend, ReasoningConfig(accept_all=True)
        )
        assert len(valid_all) == len(pool.late_emergent()) == 2
        assert all(s.accepted for s in scores_all)
        valid_nosem, _ = filter_candidates(
            pool, backend, ReasoningConfig(use_semantic=False)
        )
        assert len(valid_nosem) == 2  # the hand passes proximity alone
        valid_noprox, _ = filter_candidates(
            pool, backend, ReasoningConfig(use_proximity=False)
        )
        assert len(valid_noprox) == 1  # semantics still rejects the hand

    def test_composition_prompt_only_without_events(self):
        from statetrack.backend.scenarios import make_no_event_scene

        scn = make_no_event_scene(11)
        backend, gt = simulate(scn, 11)
        pool = build_partition(backend, gt.object_mask("target", 0))
        valid, scores = filter_candidates(pool, backend)
        tracks = [pool.prompt_tubelet, *valid]
        assert len(tracks) == 1

    def test_scores_reported_for_every_candidate(self):
        scn = make_distractor_scene(5)
        backend, gt = simulate(scn, 5)
        pool = build_partition(backend, gt.object_mask("target", 0))
        _, scores = filter_candidates(pool, backend)
        assert {s.tubelet_id for s in scores} == {t.id for t in pool.late_emergent()}

    def test_chain_anchors_smoke(self):
        scn = make_split_scene(9)
        backend, gt = simulate(scn, 9)
        pool = build_partition(backend, gt.object_mask("target", 0))
        valid_a, _ = filter_candidates(pool, backend, ReasoningConfig(chain_anchors=True))
        valid_b, _ = filter_candidates(pool, backend)
        assert [t.id for t in valid_a] == [t.id for t in valid_b]
