"""Shared test utilities: picture-string masks, random masks, scripted backends."""

import numpy as np

from statetrack.backend import (
    CandidateMaskTriple,
    Description,
    Embedding,
    PerceptionBackend,
    Tubelet,
    tubelet_id_for,
)
from statetrack.maskcore import BinaryMask, FrameSize, mask_hash


def mask_from_rows(*rows: str) -> BinaryMask:
    """Build a mask from strings like "..XX." (X = true)."""
    bits = np.array([[c == "X" for c in row] for row in rows])
    return BinaryMask.from_array(bits)


def random_mask(rng, width=None, height=None, density=0.5) -> BinaryMask:
    w = width or int(rng.integers(1, 33))
    h = height or int(rng.integers(1, 33))
    return BinaryMask.from_array(rng.random((h, w)) < density)


def rect_mask(size: FrameSize, x0, y0, w, h) -> BinaryMask:
    bits = np.zeros((size.height, size.width), dtype=bool)
    bits[y0 : y0 + h, x0 : x0 + w] = True
    return BinaryMask(size, bits)


def track_of(track_id, start, masks) -> Tubelet:
    return Tubelet.from_primary(track_id, start, list(masks))


class ScriptedBackend(PerceptionBackend):
    """Hand-authored backend: fixed entity lists, optional per-seed track masks.

    By default a track consists of the query mask repeated to the video end
    (a perfect static tracker); `track_results[(start, mask)]` overrides that
    with an explicit mask list.
    """

    def __init__(self, size, num_frames, entities_by_frame, track_results=None, embeddings=None):
        self._size = size
        self._num_frames = num_frames
        self._entities = entities_by_frame
        self._track_results = {
            (s, mask_hash(m).hex): masks for (s, m), masks in (track_results or {}).items()
        }
        self._embeddings = {
            (t, mask_hash(m).hex): v for (t, m), v in (embeddings or {}).items()
        }

    @property
    def frame_size(self):
        return self._size

    @property
    def num_frames(self):
        return self._num_frames

    @property
    def embed_dim(self):
        return 4

    def segment_entities(self, frame_index):
        self._check_frame(frame_index)
        return list(self._entities.get(frame_index, []))

    def track(self, start_frame, mask):
        self._check_track_query(start_frame, mask)
        masks = self._track_results.get((start_frame, mask_hash(mask).hex))
        if masks is None:
            masks = [mask] * (self._num_frames - start_frame)
        return Tubelet(
            tubelet_id_for(start_frame, mask),
            start_frame,
            masks,
            [CandidateMaskTriple(m, m, m) for m in masks],
        )

    def embed(self, frame_index, mask):
        self._check_embed_query(frame_index, mask)
        v = self._embeddings.get((frame_index, mask_hash(mask).hex))
        if v is None:
            v = np.zeros(4)
            v[0] = 1.0
        return Embedding(np.asarray(v, dtype=float))

    def describe(self, before_frame, after_frame, before_contours, after_contours):
        self._check_describe_query(before_frame, after_frame, before_contours, after_contours)
        return Description("unknown", tuple((i, "region") for i in range(len(after_contours))))


_WORDS = ["cut", "peel", "fold", "tear", "pour", "ignite", "apple piece", "foil sheet", "bowl"]


def perfect_prediction(annotation, size, num_frames):
    """Graph + tracks that reproduce an annotation exactly (GT as prediction)."""
    from statetrack.stategraph import GraphNode, StateChange, StateGraph

    nodes = [GraphNode("prompt", "prompt object", 0)]
    tracks = {"prompt": Tubelet.from_primary("prompt", 0, [BinaryMask.empty(size)] * num_frames)}
    edges = []
    for i, tr in enumerate(annotation.transformations):
        post = ["prompt"]
        for j, obj in enumerate(tr.objects):
            tid = f"gt{i}_{j}"
            tracks[tid] = Tubelet.from_primary(tid, 0, [obj.mask] * num_frames)
            nodes.append(GraphNode(tid, obj.text, 0))
            post.append(tid)
        edges.append(
            StateChange(tr.t_s, ("prompt",), tuple(post), Description(tr.verb, ()), False)
        )
    return StateGraph(tuple(nodes), tuple(edges)), tracks


def random_tas_case(rng, num_frames=24, size=FrameSize(16, 16)):
    """A random annotation plus a random (partially matching) prediction.

    Returns (graph, tracks, annotation); used for metric-invariant property
    tests, so the prediction deliberately mixes hits and misses.
    """
    from statetrack.metrics import TasAnnotation, TasObject, TasTransformation
    from statetrack.stategraph import GraphNode, StateChange, StateGraph

    def random_rect():
        w = int(rng.integers(2, 8))
        h = int(rng.integers(2, 8))
        x = int(rng.integers(0, size.width - w))
        y = int(rng.integers(0, size.height - h))
        return rect_mask(size, x, y, w, h)

    transformations = []
    for _ in range(int(rng.integers(0, 4))):
        t_s = int(rng.integers(1, num_frames - 2))
        t_e = int(min(num_frames - 1, t_s + rng.integers(0, 6)))
        objects = tuple(
            TasObject(random_rect(), str(rng.choice(_WORDS)))
            for _ in range(int(rng.integers(1, 4)))
        )
        transformations.append(
            TasTransformation(t_s, t_e, str(rng.choice(_WORDS[:6])), objects)
        )
    annotation = TasAnnotation(0, num_frames - 1, tuple(transformations))

    tracks = {}
    nodes = [GraphNode("prompt", "prompt object", 0)]
    edges = []

    def add_track(mask, label):
        tid = f"trk{len(tracks)}"
        tracks[tid] = Tubelet.from_primary(tid, 0, [mask] * num_frames)
        nodes.append(GraphNode(tid, label, 0))
        return tid

    for _ in range(int(rng.integers(0, 5))):
        t = int(rng.integers(1, num_frames - 1))
        post = ["prompt"]
        if transformations and rng.random() < 0.6:
            # copy a ground-truth transformation, possibly imperfectly
            tr = transformations[int(rng.integers(0, len(transformations)))]
            if rng.random() < 0.7:
                t = int(rng.integers(tr.t_s, tr.t_e + 1))
            for obj in tr.objects:
                if rng.random() < 0.8:
                    label = obj.text if rng.random() < 0.7 else str(rng.choice(_WORDS))
                    post.append(add_track(obj.mask, label))
            verb = tr.verb if rng.random() < 0.7 else str(rng.choice(_WORDS[:6]))
        else:
            verb = str(rng.choice(_WORDS[:6]))
            for _ in range(int(rng.integers(0, 3))):
                post.append(add_track(random_rect(), str(rng.choice(_WORDS))))
        edges.append(
            StateChange(t, ("prompt",), tuple(post), Description(verb, ()), False)
        )
    if "prompt" not in tracks:
        tracks["prompt"] = Tubelet.from_primary(
            "prompt", 0, [random_rect()] * num_frames
        )
    graph = StateGraph(tuple(nodes), tuple(edges))
    return graph, tracks, annotation
