import numpy as np

from cliputil import APPLE, BOWL, FRAG_START_FRAME, prompt_mask, rect_mask, render_clip
from clipexport.export import load_frames
from clipexport.models import (
    ColorComponentSegmenter,
    IouPropagationTracker,
    MaskedColorEmbedder,
    TemplateDescriber,
    default_suite,
)
from clipexport.rle import area


def test_segmenter_finds_colored_components(tmp_path):
    frames = load_frames(render_clip(tmp_path / "clip"))
    segmenter = ColorComponentSegmenter()
    masks0 = segmenter.segment(frames[0])
    assert len(masks0) == 2
    assert {area(m) for m in masks0} == {20 * 20, 14 * 14}
    masks_late = segmenter.segment(frames[FRAG_START_FRAME])
    assert len(masks_late) == 3  # fragment appeared as its own component
    # pairwise disjoint
    for i in range(len(masks_late)):
        for j in range(i + 1, len(masks_late)):
            assert not (masks_late[i] & masks_late[j]).any()


def test_segmenter_deterministic(tmp_path):
    frames = load_frames(render_clip(tmp_path / "clip"))
    a = ColorComponentSegmenter().segment(frames[0])
    b = ColorComponentSegmenter().segment(frames[0])
    assert len(a) == len(b)
    for ma, mb in zip(a, b):
        assert np.array_equal(ma, mb)


def test_tracker_follows_object_not_fragment(tmp_path):
    frames = load_frames(render_clip(tmp_path / "clip"))
    segmenter = ColorComponentSegmenter()
    tracker = IouPropagationTracker(segmenter)
    primary, candidates = tracker.track(frames, 0, prompt_mask())
    apple = rect_mask(APPLE)
    for t, mask in enumerate(primary):
        assert np.array_equal(mask, apple), f"frame {t} drifted off the object"
    m1, m2, m3 = candidates[FRAG_START_FRAME]
    assert area(m1) < area(m2) < area(m3)
    assert not (m1 & ~m2).any() and not (m2 & ~m3).any()


def test_tracker_loses_unmatched_region(tmp_path):
    frames = load_frames(render_clip(tmp_path / "clip"))
    tracker = IouPropagationTracker(ColorComponentSegmenter())
    nowhere = rect_mask((1, 80, 6, 6))
    primary, _ = tracker.track(frames, 0, nowhere)
    assert all(area(m) == 0 for m in primary)


def test_embedder_unit_norm_and_color_affinity(tmp_path):
    frames = load_frames(render_clip(tmp_path / "clip"))
    embedder = MaskedColorEmbedder()
    apple = embedder.embed(frames[0], rect_mask(APPLE))
    bowl = embedder.embed(frames[0], rect_mask(BOWL))
    frag = embedder.embed(frames[FRAG_START_FRAME], rect_mask((38, 28, 10, 10)))
    for v in (apple, bowl, frag):
        assert abs(np.linalg.norm(v) - 1.0) <= 1e-9
        assert v.shape == (8,)
    assert float(apple @ frag) > 0.95  # same color
    assert float(apple @ bowl) < 0.8  # different color


def test_template_describer_names_every_region():
    desc = TemplateDescriber().describe(None, None, [None], [None, None])
    assert desc["action_verb"] == "unknown"
    assert desc["objects"] == [[0, "region 0"], [1, "region 1"]]


def test_suite_pins():
    pins = default_suite().pins()
    assert set(pins) == {"segmenter", "tracker", "embedder", "describer"}
    assert all("/" in v for v in pins.values())
