"""Model adapters behind the four export-side perception roles.

Real deployments plug in heavyweight models (an entity segmenter, a
promptable video tracker with multi-mask output, an image-text embedder, and
a multimodal describer). The built-in adapters below are lightweight
classical stand-ins that work on flat-color clips, so the export pipeline and
its tests run without GPUs or network access. Adapters are deterministic for
fixed inputs; `version` strings are pinned into the bundle meta.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .rle import area, iou


class EntitySegmenter(Protocol):
    version: str

    def segment(self, frame: np.ndarray) -> list[np.ndarray]:
        """Pairwise-disjoint masks for one RGB frame."""


class VideoTracker(Protocol):
    version: str

    def track(
        self, frames: Sequence[np.ndarray], start: int, mask: np.ndarray
    ) -> tuple[list[np.ndarray], list[tuple[np.ndarray, np.ndarray, np.ndarray]]]:
        """Primary mask and a three-mask candidate tuple per frame start..end."""


class Embedder(Protocol):
    version: str
    dim: int

    def embed(self, frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Unit-norm feature vector of a masked region."""


class Describer(Protocol):
    version: str

    def describe(
        self,
        before_frame: np.ndarray,
        after_frame: np.ndarray,
        before_contours: Sequence[np.ndarray],
        after_contours: Sequence[np.ndarray],
    ) -> dict:
        """{"action_verb": str, "objects": [[contour_index, text], ...]}"""


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask
    return ndimage.maximum_filter(mask, size=2 * radius + 1, mode="constant", cval=False)


class ColorComponentSegmenter:
    """Entities = connected components of each exact non-background color.

    The background is the most frequent color in the frame. Suitable for
    rendered clips; a real deployment swaps in a learned entity segmenter.
    """

    version = "color-components/1"

    def __init__(self, min_pixels: int = 4):
        self.min_pixels = min_pixels

    def segment(self, frame: np.ndarray) -> list[np.ndarray]:
        pixels = frame.reshape(-1, frame.shape[-1])
        colors, counts = np.unique(pixels, axis=0, return_counts=True)
        background = colors[int(np.argmax(counts))]
        order = np.lexsort((colors[:, 2], colors[:, 1], colors[:, 0], -counts))
        masks = []
        for idx in order:
            color = colors[idx]
            if np.array_equal(color, background):
                continue
            region = (frame == color).all(axis=-1)
            labels, count = ndimage.label(region)
            for lab in range(1, count + 1):
                mask = labels == lab
                if int(mask.sum()) >= self.min_pixels:
                    masks.append(mask)
        masks.sort(key=lambda m: (-area(m), encode_anchor(m)))
        return masks


def encode_anchor(mask: np.ndarray) -> tuple[int, int]:
    ys, xs = np.nonzero(mask)
    return int(ys[0]), int(xs[0])


class IouPropagationTracker:
    """Follows the entity with the best IoU against the previous mask.

    Loses the object (empty masks) when nothing overlaps well enough - the
    false-negative behavior the consuming pipeline recovers from. Candidate
    masks are the primary dilated by the two radii, mirroring a multi-mask
    tracker's ambiguity outputs.
    """

    version = "iou-propagation/1"

    def __init__(self, segmenter: EntitySegmenter, r1: int = 3, r2: int = 9, min_iou: float = 0.2):
        self._segmenter = segmenter
        self.r1 = r1
        self.r2 = r2
        self.min_iou = min_iou
        self._cache: dict[int, list[np.ndarray]] = {}

    def _entities(self, frames, t):
        if t not in self._cache:
            self._cache[t] = self._segmenter.segment(frames[t])
        return self._cache[t]

    def track(self, frames, start, mask):
        primary: list[np.ndarray] = []
        candidates = []
        current = mask
        lost = False
        empty = np.zeros_like(mask)
        for t in range(start, len(frames)):
            if lost:
                m = empty
            else:
                entities = self._entities(frames, t)
                scored = [(iou(current, e), k) for k, e in enumerate(entities)]
                best_iou, best_k = max(scored, default=(0.0, -1))
                if best_iou < self.min_iou:
                    lost = True
                    m = empty
                else:
                    m = entities[best_k]
                    current = m
            primary.append(m)
            candidates.append((m, dilate(m, self.r1), dilate(m, self.r2)))
        return primary, candidates


class MaskedColorEmbedder:
    """Mean/spread of the masked colors plus an area term, unit-normalized."""

    version = "masked-color/1"
    dim = 8

    def embed(self, frame: np.ndarray, mask: np.ndarray) -> np.ndarray:
        values = frame[mask].astype(np.float64) / 255.0
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        frac = float(mask.sum()) / mask.size
        v = np.array([*mean, *std, np.sqrt(frac) * 0.25, 0.0])
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            v = np.zeros(self.dim)
            v[-1] = 1.0
            return v
        return v / norm


class TemplateDescriber:
    """Offline describer: fixed verb, contours named by index."""

    version = "template/1"

    def describe(self, before_frame, after_frame, before_contours, after_contours):
        return {
            "action_verb": "unknown",
            "objects": [[i, f"region {i}"] for i in range(len(after_contours))],
        }


DESCRIBER_SYSTEM_PROMPT = (
    "You are a careful vision assistant. Two video frames are provided; regions are outlined "
    "and numbered. Between the first and second frame the outlined object changed state."
)

# This package's own wording: asks for a verb plus one short name per
# numbered region, as JSON only, so replies parse without heuristics.
DESCRIBER_PROMPT_TEMPLATE = (
    "The first image shows the object of interest at the start of the clip. The second image "
    "shows frame {after_frame} with {n_regions} outlined regions numbered 0..{last_region}. "
    "Reply with JSON only, no prose: {{\"action_verb\": \"<verb phrase for the change>\", "
    "\"objects\": [[<region index>, \"<short object name>\"], ...]}} with exactly one entry "
    "per numbered region."
)


class JsonLlmDescriber:
    """Describer backed by an OpenAI-compatible chat endpoint (env-configured).

    Parses the JSON-constrained reply into the structured description; any
    parse failure falls back to the template output so exports never block on
    a flaky reply.
    """

    version = "json-llm/1"

    def __init__(self, complete=None):
        if complete is None:
            complete = _completion_from_env()
        self._complete = complete
        self._fallback = TemplateDescriber()

    def describe(self, before_frame, after_frame, before_contours, after_contours):
        prompt = DESCRIBER_PROMPT_TEMPLATE.format(
            after_frame="current",
            n_regions=len(after_contours),
            last_region=len(after_contours) - 1,
        )
        try:
            reply = self._complete(DESCRIBER_SYSTEM_PROMPT, prompt)
            data = json.loads(reply)
            verb = str(data["action_verb"])
            objects = [[int(i), str(text)] for i, text in data["objects"]]
            if not verb:
                raise ValueError("empty verb")
            return {"action_verb": verb, "objects": objects}
        except Exception:
            return self._fallback.describe(
                before_frame, after_frame, before_contours, after_contours
            )


def _completion_from_env():
    url = os.environ.get("CLIPEXPORT_LLM_URL")
    model = os.environ.get("CLIPEXPORT_LLM_MODEL")
    if not url or not model:
        raise RuntimeError("JsonLlmDescriber needs CLIPEXPORT_LLM_URL and CLIPEXPORT_LLM_MODEL")
    key = os.environ.get("CLIPEXPORT_LLM_KEY", "")
    import requests

    def complete(system_prompt, user_prompt):
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        resp = requests.post(url, json=payload, headers=headers, timeout=120)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    return complete


@dataclass(frozen=True)
class ModelSuite:
    segmenter: EntitySegmenter
    tracker: VideoTracker
    embedder: Embedder
    describer: Describer

    def pins(self) -> dict:
        return {
            "segmenter": self.segmenter.version,
            "tracker": self.tracker.version,
            "embedder": self.embedder.version,
            "describer": self.describer.version,
        }


def default_suite(r1: int = 3, r2: int = 9) -> ModelSuite:
    segmenter = ColorComponentSegmenter()
    return ModelSuite(
        segmenter=segmenter,
        tracker=IouPropagationTracker(segmenter, r1=r1, r2=r2),
        embedder=MaskedColorEmbedder(),
        describer=TemplateDescriber(),
    )
