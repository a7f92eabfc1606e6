"""Prebuilt scenario families, parameterized by seed.

Used by the test-suite and by ``statetrack simulate --family``. Geometry is
jittered per seed but always keeps objects pairwise disjoint, in bounds, and
fragments within the proximity search radius of their parent at spawn time.
"""

from __future__ import annotations

import random

from ..errors import ValidationError
from ..maskcore import FrameSize
from .simulator import Keyframe, NewObjectEvent, ObjectSpec, Scenario, SplitEvent

SIZE = FrameSize(64, 64)
NUM_FRAMES = 24
_LAST = NUM_FRAMES - 1


def _static(oid, class_id, text, shape, cx, cy, w, h):
    return ObjectSpec(oid, class_id, text, shape, (Keyframe(0, cx, cy, w, h),))


def _drifting(oid, class_id, text, shape, frame0, cx, cy, w, h, vx, vy):
    span = _LAST - frame0
    return ObjectSpec(
        oid,
        class_id,
        text,
        shape,
        (
            Keyframe(frame0, cx, cy, w, h),
            Keyframe(_LAST, cx + vx * span, cy + vy * span, w, h),
        ),
    )


def _parent_and_bowl(rng):
    cx = 20 + rng.randrange(7)
    cy = 26 + rng.randrange(7)
    side = 14 + 2 * rng.randrange(2)
    parent = _static("target", 1, "apple", "rect", cx, cy, side, side)
    bowl = _static("bowl", 2, "bowl", "rect", 52, 10, 8, 8)
    return parent, bowl


def _fragment_right_of(parent: ObjectSpec, rng, split_frame: int, oid="piece"):
    k0 = parent.keyframes[0]
    gap = 2 + rng.randrange(2)
    cx = k0.cx + k0.w / 2 + gap + 3
    return _drifting(oid, 1, "apple piece", "rect", split_frame, cx, k0.cy, 6, 6, 0.5, 0.0)


def make_split_scene(seed: int) -> Scenario:
    """One same-class fragment splitting off the prompt object."""
    rng = random.Random(f"split:{seed}")
    parent, bowl = _parent_and_bowl(rng)
    k = 8 + rng.randrange(7)
    fragment = _fragment_right_of(parent, rng, k)
    return Scenario(
        size=SIZE,
        num_frames=NUM_FRAMES,
        prompt_object="target",
        objects=(parent, bowl),
        events=(SplitEvent("target", k, "cut", (fragment,)),),
    )


def make_distractor_scene(seed: int) -> Scenario:
    """Split scene plus a different-class object entering adjacent to the prompt."""
    rng = random.Random(f"distract:{seed}")
    parent, bowl = _parent_and_bowl(rng)
    k = 8 + rng.randrange(7)
    fragment = _fragment_right_of(parent, rng, k)
    k2 = k + 2 + rng.randrange(3)
    p0 = parent.keyframes[0]
    hand = _drifting(
        "hand", 3, "hand", "rect", k2, p0.cx, p0.cy + p0.h / 2 + 5, 6, 6, 0.0, 0.5
    )
    return Scenario(
        size=SIZE,
        num_frames=NUM_FRAMES,
        prompt_object="target",
        objects=(parent, bowl, hand),
        events=(
            SplitEvent("target", k, "cut", (fragment,)),
            NewObjectEvent("hand", k2),
        ),
    )


def make_no_event_scene(seed: int) -> Scenario:
    """Three drifting objects, zero events; the tracker alone suffices."""
    rng = random.Random(f"static:{seed}")

    def jitter():
        return rng.choice([-2, 0, 2]) / NUM_FRAMES

    target = _drifting(
        "target",
        1,
        "apple",
        rng.choice(["rect", "ellipse"]),
        0,
        18 + rng.randrange(5),
        20 + rng.randrange(5),
        12 + 2 * rng.randrange(2),
        12 + 2 * rng.randrange(2),
        jitter(),
        jitter(),
    )
    bowl = _drifting(
        "bowl", 2, "bowl", "rect", 0, 46 + rng.randrange(5), 18 + rng.randrange(5),
        10, 10, jitter(), jitter(),
    )
    cloth = _drifting(
        "cloth", 4, "cloth", "rect", 0, 24 + rng.randrange(5), 46 + rng.randrange(5),
        10, 10, jitter(), jitter(),
    )
    return Scenario(
        size=SIZE,
        num_frames=NUM_FRAMES,
        prompt_object="target",
        objects=(target, bowl, cloth),
        events=(),
    )


def make_two_split_scene(seed: int) -> Scenario:
    """Two sequential single-fragment splits off the prompt object."""
    rng = random.Random(f"twosplit:{seed}")
    parent, bowl = _parent_and_bowl(rng)
    k1 = 6 + rng.randrange(3)
    k2 = 14 + rng.randrange(3)
    frag1 = _fragment_right_of(parent, rng, k1, oid="piece_a")
    p0 = parent.keyframes[0]
    frag2 = _drifting(
        "piece_b", 1, "apple piece", "rect", k2, p0.cx, p0.cy + p0.h / 2 + 5, 6, 6, 0.0, 0.5
    )
    return Scenario(
        size=SIZE,
        num_frames=NUM_FRAMES,
        prompt_object="target",
        objects=(parent, bowl),
        events=(
            SplitEvent("target", k1, "cut", (frag1,)),
            SplitEvent("target", k2, "cut", (frag2,)),
        ),
    )


FAMILIES = {
    "split-adjacent-same-class": make_split_scene,
    "adjacent-different-class": make_distractor_scene,
    "no-event": make_no_event_scene,
    "two-splits": make_two_split_scene,
}


def make_family_scene(family: str, seed: int) -> Scenario:
    try:
        factory = FAMILIES[family]
    except KeyError:
        raise ValidationError(
            f"unknown scenario family {family!r}; choices: {', '.join(sorted(FAMILIES))}"
        ) from None
    return factory(seed)
