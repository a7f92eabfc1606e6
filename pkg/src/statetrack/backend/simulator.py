"""Deterministic scripted-scene backend.

A scenario describes rectangle/ellipse objects moving between keyframes plus
three event kinds: an object splitting off fragments, an appearance change,
and a new object entering the scene. The backend rasterizes every object per
frame and answers the four perception calls from those rasters:

* ``segment_entities`` returns the visible objects' masks with overlaps
  resolved by descending area (larger mask keeps contested pixels);
* ``track`` follows the object that best covers the query mask and never
  includes pixels of fragments spawned after the track started - the
  false-negative behavior the pipeline exists to repair. Candidate masks are
  the primary mask dilated by the two configured radii;
* ``embed`` returns a unit vector: class basis + small appearance offset +
  bounded pseudo-noise, all seeded from (scenario seed, frame, mask hash);
* ``describe`` copies the verb from the split event whose fragments best
  overlap the after-contours and names each contour by the best-overlapping
  object's text, falling back to "unknown".

Everything is a pure function of (scenario, seed), so repeated runs are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from ..errors import ValidationError
from ..maskcore import BinaryMask, FrameSize, intersection_area, mask_hash, union_all
from ..metrics import TasAnnotation, TasObject, TasTransformation
from . import (
    CandidateMaskTriple,
    Description,
    Embedding,
    PerceptionBackend,
    Tubelet,
    tubelet_id_for,
)

APPEARANCE_OFFSET_SCALE = 0.15


@dataclass(frozen=True)
class Keyframe:
    frame: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    class_id: int
    text: str
    shape: str  # "rect" | "ellipse"
    keyframes: tuple[Keyframe, ...]
    appearance: tuple[int, ...] | None = None  # optional explicit per-frame ids


@dataclass(frozen=True)
class SplitEvent:
    parent_id: str
    frame: int
    verb: str
    fragments: tuple[ObjectSpec, ...]


@dataclass(frozen=True)
class AppearanceChangeEvent:
    object_id: str
    frame: int


@dataclass(frozen=True)
class NewObjectEvent:
    object_id: str
    frame: int


Event = Union[SplitEvent, AppearanceChangeEvent, NewObjectEvent]


@dataclass(frozen=True)
class Scenario:
    size: FrameSize
    num_frames: int
    prompt_object: str
    objects: tuple[ObjectSpec, ...]
    events: tuple[Event, ...] = ()
    embed_dim: int = 8
    embed_sigma: float = 0.1
    dilate_r1: int = 3
    dilate_r2: int = 9
    grace_frames: int = 5


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame mask of the prompt lineage plus the matching annotation."""

    lineage_masks: tuple[BinaryMask, ...]
    annotation: TasAnnotation
    lineage_ids: tuple[str, ...]
    _scene: "_Scene" = field(repr=False)

    def object_mask(self, object_id: str, frame: int) -> BinaryMask | None:
        """Ground-truth raster of one object; None before it enters."""
        return self._scene.raster(object_id, frame)


class _CompiledObject:
    __slots__ = ("spec", "enter_frame", "split_frame", "split_parent", "appearance")

    def __init__(self, spec: ObjectSpec, enter_frame: int, split_frame=None, split_parent=None):
        self.spec = spec
        self.enter_frame = enter_frame
        self.split_frame = split_frame
        self.split_parent = split_parent
        self.appearance: tuple[int, ...] = ()


def _rasterize(spec: ObjectSpec, frame: int, size: FrameSize) -> np.ndarray:
    frames = [k.frame for k in spec.keyframes]
    cx = float(np.interp(frame, frames, [k.cx for k in spec.keyframes]))
    cy = float(np.interp(frame, frames, [k.cy for k in spec.keyframes]))
    w = float(np.interp(frame, frames, [k.w for k in spec.keyframes]))
    h = float(np.interp(frame, frames, [k.h for k in spec.keyframes]))
    if w <= 0 or h <= 0:
        return np.zeros((size.height, size.width), dtype=bool)
    ys, xs = np.ogrid[0 : size.height, 0 : size.width]
    xc = xs + 0.5
    yc = ys + 0.5
    if spec.shape == "rect":
        return (np.abs(xc - cx) <= w / 2) & (np.abs(yc - cy) <= h / 2)
    # ellipse
    return ((xc - cx) / (w / 2)) ** 2 + ((yc - cy) / (h / 2)) ** 2 <= 1.0


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    """Dilation by a square structuring element of the given radius."""
    if radius <= 0:
        return mask
    grown = ndimage.maximum_filter(
        mask.array, size=2 * radius + 1, mode="constant", cval=False
    )
    return BinaryMask(mask.size, grown)


def _unit_vec(tag: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    v = rng.uniform(-1.0, 1.0, dim)
    norm = np.linalg.norm(v)
    if norm < 1e-12:  # unreachable for continuous draws; belt and braces
        v = np.zeros(dim)
        v[0] = 1.0
        return v
    return v / norm


class _Scene:
    """Compiled scenario: object table, per-frame rasters, event index."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.size = scenario.size
        self.num_frames = scenario.num_frames
        self.objects: list[_CompiledObject] = []
        self.by_id: dict[str, _CompiledObject] = {}
        self.splits: list[SplitEvent] = []
        self._compile()
        self._rasters: dict[str, list[BinaryMask | None]] = {}
        self._rasterize_all()
        self._validate_events()

    def _add(self, obj: _CompiledObject) -> None:
        oid = obj.spec.object_id
        if oid in self.by_id:
            raise ValidationError(f"duplicate object id {oid!r} in scenario")
        self.objects.append(obj)
        self.by_id[oid] = obj

    def _compile(self) -> None:
        sc = self.scenario
        if sc.num_frames < 1:
            raise ValidationError("scenario num_frames must be >= 1")
        if not (0 <= sc.dilate_r1 <= sc.dilate_r2):
            raise ValidationError("scenario requires 0 <= dilate_r1 <= dilate_r2")
        if sc.grace_frames < 0:
            raise ValidationError("scenario grace_frames must be >= 0")
        for spec in sc.objects:
            self._add(_CompiledObject(spec, enter_frame=0))
        for ev in sc.events:
            if not 1 <= ev.frame <= sc.num_frames - 1:
                raise ValidationError(
                    f"event frame {ev.frame} outside [1, {sc.num_frames - 1}]"
                )
            if isinstance(ev, SplitEvent):
                self.splits.append(ev)
                for frag in ev.fragments:
                    self._add(
                        _CompiledObject(
                            frag,
                            enter_frame=ev.frame,
                            split_frame=ev.frame,
                            split_parent=ev.parent_id,
                        )
                    )
            elif isinstance(ev, NewObjectEvent):
                obj = self.by_id.get(ev.object_id)
                if obj is None or obj.split_frame is not None:
                    raise ValidationError(
                        f"new_object event names unknown object {ev.object_id!r}"
                    )
                if obj.enter_frame != 0:
                    raise ValidationError(
                        f"object {ev.object_id!r} named by more than one new_object event"
                    )
                obj.enter_frame = ev.frame
        for obj in self.objects:
            spec = obj.spec
            if spec.shape not in ("rect", "ellipse"):
                raise ValidationError(f"object {spec.object_id!r}: unknown shape {spec.shape!r}")
            if not 0 <= spec.class_id < sc.embed_dim:
                raise ValidationError(
                    f"object {spec.object_id!r}: class_id must be in [0, {sc.embed_dim})"
                )
            if not spec.keyframes:
                raise ValidationError(f"object {spec.object_id!r}: needs at least one keyframe")
            frames = [k.frame for k in spec.keyframes]
            if frames != sorted(frames) or len(set(frames)) != len(frames):
                raise ValidationError(
                    f"object {spec.object_id!r}: keyframes must be strictly increasing"
                )
            if frames[0] < 0 or frames[-1] > sc.num_frames - 1:
                raise ValidationError(f"object {spec.object_id!r}: keyframe out of range")
            if spec.appearance is None:
                app = np.zeros(sc.num_frames, dtype=int)
                for ev in sc.events:
                    if isinstance(ev, AppearanceChangeEvent):
                        if ev.object_id not in self.by_id:
                            raise ValidationError(
                                f"appearance_change names unknown object {ev.object_id!r}"
                            )
                        if ev.object_id == spec.object_id:
                            app[ev.frame :] += 1
                obj.appearance = tuple(int(a) for a in app)
            else:
                if len(spec.appearance) != sc.num_frames:
                    raise ValidationError(
                        f"object {spec.object_id!r}: appearance list must have one id per frame"
                    )
                obj.appearance = tuple(spec.appearance)
        if self.scenario.prompt_object not in self.by_id:
            raise ValidationError(
                f"prompt_object {self.scenario.prompt_object!r} not declared in scenario"
            )

    def _rasterize_all(self) -> None:
        for obj in self.objects:
            masks: list[BinaryMask | None] = []
            for t in range(self.num_frames):
                if t < obj.enter_frame:
                    masks.append(None)
                else:
                    masks.append(BinaryMask(self.size, _rasterize(obj.spec, t, self.size)))
            self._rasters[obj.spec.object_id] = masks

    def _validate_events(self) -> None:
        r2 = self.scenario.dilate_r2
        for ev in self.splits:
            parent = self.by_id.get(ev.parent_id)
            if parent is None:
                raise ValidationError(f"split event names unknown parent {ev.parent_id!r}")
            if parent.enter_frame >= ev.frame:
                raise ValidationError(
                    f"split parent {ev.parent_id!r} does not exist before frame {ev.frame}"
                )
            if not ev.fragments:
                raise ValidationError("split event needs at least one fragment")
            if not ev.verb:
                raise ValidationError("split event needs a verb")
            parent_mask = self.raster(ev.parent_id, ev.frame)
            reach = dilate(parent_mask, r2) if parent_mask.area else parent_mask
            for frag in ev.fragments:
                fmask = self.raster(frag.object_id, ev.frame)
                if fmask.area == 0 or intersection_area(fmask, reach) == 0:
                    raise ValidationError(
                        f"fragment {frag.object_id!r} does not spawn within {r2}px of its parent"
                    )

    # queries

    def raster(self, object_id: str, frame: int) -> BinaryMask | None:
        return self._rasters[object_id][frame]

    def present(self, frame: int) -> list[_CompiledObject]:
        return [o for o in self.objects if o.enter_frame <= frame]

    def best_match(self, mask: BinaryMask, frame: int) -> _CompiledObject | None:
        """Object whose raster best covers the mask; None if nothing overlaps."""
        best = None
        best_count = 0
        for obj in self.present(frame):
            r = self.raster(obj.spec.object_id, frame)
            count = intersection_area(mask, r)
            if count > best_count:
                best, best_count = obj, count
        return best

    def fragments_after(self, start_frame: int) -> list[_CompiledObject]:
        return [
            o for o in self.objects if o.split_frame is not None and o.split_frame > start_frame
        ]


class SimulatorBackend(PerceptionBackend):
    def __init__(self, scene: _Scene, seed: int):
        self._scene = scene
        self._seed = seed

    @property
    def frame_size(self) -> FrameSize:
        return self._scene.size

    @property
    def num_frames(self) -> int:
        return self._scene.num_frames

    @property
    def embed_dim(self) -> int:
        return self._scene.scenario.embed_dim

    def object_mask(self, object_id: str, frame: int) -> BinaryMask | None:
        """Ground-truth raster; used to resolve `object:<id>` prompt specs."""
        if object_id not in self._scene.by_id:
            raise ValidationError(f"unknown object id {object_id!r}")
        return self._scene.raster(object_id, frame)

    def segment_entities(self, frame_index: int) -> list[BinaryMask]:
        self._check_frame(frame_index)
        objs = []
        for obj in self._scene.present(frame_index):
            r = self._scene.raster(obj.spec.object_id, frame_index)
            if r.area > 0:
                objs.append(r)
        # larger mask keeps contested pixels; ties broken by declaration order
        objs.sort(key=lambda m: -m.area)
        taken = np.zeros((self.frame_size.height, self.frame_size.width), dtype=bool)
        out = []
        for r in objs:
            cut = r.array & ~taken
            if cut.any():
                out.append(BinaryMask(self.frame_size, cut))
                taken |= cut
        return out

    def track(self, start_frame: int, mask: BinaryMask) -> Tubelet:
        self._check_track_query(start_frame, mask)
        scene = self._scene
        followed = scene.best_match(mask, start_frame)
        late_fragments = scene.fragments_after(start_frame)
        r1, r2 = scene.scenario.dilate_r1, scene.scenario.dilate_r2
        primary: list[BinaryMask] = []
        candidates: list[CandidateMaskTriple] = []
        for t in range(start_frame, scene.num_frames):
            if followed is None:
                m = BinaryMask.empty(self.frame_size)
            else:
                m = scene.raster(followed.spec.object_id, t)
                lost = [
                    scene.raster(f.spec.object_id, t)
                    for f in late_fragments
                    if f.enter_frame <= t
                ]
                if lost:
                    m = BinaryMask(self.frame_size, m.array & ~union_all(lost, self.frame_size).array)
            primary.append(m)
            candidates.append(CandidateMaskTriple(m, dilate(m, r1), dilate(m, r2)))
        return Tubelet(tubelet_id_for(start_frame, mask), start_frame, primary, candidates)

    def embed(self, frame_index: int, mask: BinaryMask) -> Embedding:
        self._check_embed_query(frame_index, mask)
        scene = self._scene
        d = self.embed_dim
        sigma = scene.scenario.embed_sigma
        obj = scene.best_match(mask, frame_index)
        if obj is None:
            base = _unit_vec(f"bg:{mask_hash(mask).hex}", d)
        else:
            base = np.zeros(d)
            base[obj.spec.class_id] = 1.0
            app_id = obj.appearance[frame_index]
            if app_id != 0:
                base = base + APPEARANCE_OFFSET_SCALE * _unit_vec(
                    f"app:{obj.spec.class_id}:{app_id}", d
                )
        if sigma != 0.0:
            tag = f"noise:{self._seed}:{frame_index}:{mask_hash(mask).hex}"
            digest = hashlib.sha256(tag.encode("ascii")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            base = base + sigma * rng.uniform(-1.0, 1.0, d)
        norm = np.linalg.norm(base)
        if norm < 1e-12:
            base = _unit_vec(f"bg:{mask_hash(mask).hex}", d)
            norm = 1.0
        return Embedding(base / norm)

    def describe(
        self,
        before_frame: int,
        after_frame: int,
        before_contours: Sequence[BinaryMask],
        after_contours: Sequence[BinaryMask],
    ) -> Description:
        self._check_describe_query(before_frame, after_frame, before_contours, after_contours)
        scene = self._scene
        best_event = None
        best_score = 0
        for ev in scene.splits:
            if ev.frame > after_frame:
                continue
            score = 0
            for frag in ev.fragments:
                r = scene.raster(frag.object_id, after_frame)
                if r is None:
                    continue
                for c in after_contours:
                    score += intersection_area(c, r)
            if score > best_score:
                best_event, best_score = ev, score
        verb = best_event.verb if best_event is not None else "unknown"
        objects = []
        for idx, contour in enumerate(after_contours):
            obj = scene.best_match(contour, after_frame) if contour.area else None
            objects.append((idx, obj.spec.text if obj is not None else "unknown"))
        return Description(verb, tuple(objects))


def simulate(scenario: Scenario, seed: int) -> tuple[SimulatorBackend, GroundTruth]:
    """Build the scripted backend plus ground truth for the prompt lineage."""
    scene = _Scene(scenario)
    backend = SimulatorBackend(scene, seed)

    lineage = {scenario.prompt_object}
    for ev in sorted(scene.splits, key=lambda e: e.frame):
        if ev.parent_id in lineage:
            lineage.update(f.object_id for f in ev.fragments)
    lineage_ids = tuple(o.spec.object_id for o in scene.objects if o.spec.object_id in lineage)

    masks = []
    for t in range(scenario.num_frames):
        rasters = [
            scene.raster(oid, t)
            for oid in lineage_ids
            if scene.by_id[oid].enter_frame <= t
        ]
        masks.append(union_all(rasters, scenario.size))

    transformations = []
    last = scenario.num_frames - 1
    for ev in scene.splits:
        if ev.parent_id not in lineage:
            continue
        t_e = min(ev.frame + scenario.grace_frames, last)
        objects = tuple(
            TasObject(scene.raster(f.object_id, t_e), f.text) for f in ev.fragments
        )
        transformations.append(TasTransformation(ev.frame, t_e, ev.verb, objects))
    transformations.sort(key=lambda tr: tr.t_s)
    annotation = TasAnnotation(0, last, tuple(transformations))

    return backend, GroundTruth(tuple(masks), annotation, lineage_ids, scene)


# scenario file form


def _keyframe_to_json(k: Keyframe) -> dict:
    return {"frame": k.frame, "cx": k.cx, "cy": k.cy, "w": k.w, "h": k.h}


def _object_to_json(o: ObjectSpec) -> dict:
    out = {
        "id": o.object_id,
        "class_id": o.class_id,
        "text": o.text,
        "shape": o.shape,
        "keyframes": [_keyframe_to_json(k) for k in o.keyframes],
    }
    if o.appearance is not None:
        out["appearance"] = list(o.appearance)
    return out


def scenario_to_json(scenario: Scenario) -> dict:
    events = []
    for ev in scenario.events:
        if isinstance(ev, SplitEvent):
            events.append(
                {
                    "kind": "split",
                    "parent": ev.parent_id,
                    "frame": ev.frame,
                    "verb": ev.verb,
                    "fragments": [_object_to_json(f) for f in ev.fragments],
                }
            )
        elif isinstance(ev, AppearanceChangeEvent):
            events.append({"kind": "appearance_change", "object": ev.object_id, "frame": ev.frame})
        else:
            events.append({"kind": "new_object", "object": ev.object_id, "frame": ev.frame})
    return {
        "width": scenario.size.width,
        "height": scenario.size.height,
        "num_frames": scenario.num_frames,
        "prompt_object": scenario.prompt_object,
        "embed_dim": scenario.embed_dim,
        "embed_sigma": scenario.embed_sigma,
        "dilate_r1": scenario.dilate_r1,
        "dilate_r2": scenario.dilate_r2,
        "grace_frames": scenario.grace_frames,
        "objects": [_object_to_json(o) for o in scenario.objects],
        "events": events,
    }


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"scenario {where}: missing field {key!r}")
    return obj[key]


def _object_from_json(obj: dict, where: str) -> ObjectSpec:
    keyframes = tuple(
        Keyframe(
            int(_require(k, "frame", where)),
            float(_require(k, "cx", where)),
            float(_require(k, "cy", where)),
            float(_require(k, "w", where)),
            float(_require(k, "h", where)),
        )
        for k in _require(obj, "keyframes", where)
    )
    appearance = obj.get("appearance")
    return ObjectSpec(
        object_id=str(_require(obj, "id", where)),
        class_id=int(_require(obj, "class_id", where)),
        text=str(_require(obj, "text", where)),
        shape=str(_require(obj, "shape", where)),
        keyframes=keyframes,
        appearance=tuple(int(a) for a in appearance) if appearance is not None else None,
    )


def scenario_from_json(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ValidationError("scenario file must hold a JSON object")
    objects = tuple(
        _object_from_json(o, f"objects[{i}]")
        for i, o in enumerate(_require(data, "objects", "root"))
    )
    events: list[Event] = []
    for i, ev in enumerate(data.get("events", [])):
        where = f"events[{i}]"
        kind = _require(ev, "kind", where)
        frame = int(_require(ev, "frame", where))
        if kind == "split":
            events.append(
                SplitEvent(
                    parent_id=str(_require(ev, "parent", where)),
                    frame=frame,
                    verb=str(_require(ev, "verb", where)),
                    fragments=tuple(
                        _object_from_json(f, f"{where}.fragments[{j}]")
                        for j, f in enumerate(_require(ev, "fragments", where))
                    ),
                )
            )
        elif kind == "appearance_change":
            events.append(AppearanceChangeEvent(str(_require(ev, "object", where)), frame))
        elif kind == "new_object":
            events.append(NewObjectEvent(str(_require(ev, "object", where)), frame))
        else:
            raise ValidationError(f"scenario {where}: unknown event kind {kind!r}")
    return Scenario(
        size=FrameSize(int(_require(data, "width", "root")), int(_require(data, "height", "root"))),
        num_frames=int(_require(data, "num_frames", "root")),
        prompt_object=str(_require(data, "prompt_object", "root")),
        objects=objects,
        events=tuple(events),
        embed_dim=int(data.get("embed_dim", 8)),
        embed_sigma=float(data.get("embed_sigma", 0.1)),
        dilate_r1=int(data.get("dilate_r1", 3)),
        dilate_r2=int(data.get("dilate_r2", 9)),
        grace_frames=int(data.get("grace_frames", 5)),
    )


def load_scenario(path: Path | str) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing scenario file: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario file {path} is not valid JSON: {exc}") from exc
    return scenario_from_json(data)
