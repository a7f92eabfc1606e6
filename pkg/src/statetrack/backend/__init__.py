"""Perception-backend contract and the value types flowing through it.

A backend answers four questions about a video: what entities are in a frame,
how a masked object evolves forward in time (with the tracker's three
alternative masks per frame), what a masked region embeds to, and how a
transformation between two frames should be described. Implementations:

* :mod:`statetrack.backend.simulator` - deterministic scripted scenes
* :mod:`statetrack.backend.replay` - lookups against a recorded bundle
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..maskcore import BinaryMask, FrameSize, mask_hash

EMBED_NORM_TOL = 1e-6


@dataclass(frozen=True)
class CandidateMaskTriple:
    """The tracker's three alternative segmentations of an object at one frame."""

    m1: BinaryMask
    m2: BinaryMask
    m3: BinaryMask

    def __post_init__(self):
        if not (self.m1.size == self.m2.size == self.m3.size):
            raise ValueError("candidate masks must share one frame size")

    def __iter__(self):
        return iter((self.m1, self.m2, self.m3))


class Tubelet:
    """One entity's mask per frame from its start frame to the end of the video."""

    __slots__ = ("id", "start_frame", "primary", "candidates")

    def __init__(
        self,
        tubelet_id: str,
        start_frame: int,
        primary: Sequence[BinaryMask],
        candidates: Sequence[CandidateMaskTriple],
    ):
        if start_frame < 0:
            raise ValueError("start_frame must be >= 0")
        if len(primary) != len(candidates) or not primary:
            raise ValueError("primary and candidate lists must be nonempty and equal length")
        for k, (mask, triple) in enumerate(zip(primary, candidates)):
            if mask != triple.m1 and mask != triple.m2 and mask != triple.m3:
                raise ValueError(
                    f"primary mask at frame {start_frame + k} is not one of its candidates"
                )
        self.id = tubelet_id
        self.start_frame = start_frame
        self.primary = tuple(primary)
        self.candidates = tuple(candidates)

    @classmethod
    def from_primary(
        cls, tubelet_id: str, start_frame: int, primary: Sequence[BinaryMask]
    ) -> "Tubelet":
        """Tubelet whose candidate triples are three copies of the primary mask."""
        triples = [CandidateMaskTriple(m, m, m) for m in primary]
        return cls(tubelet_id, start_frame, primary, triples)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.primary) - 1

    @property
    def seed_mask(self) -> BinaryMask:
        return self.primary[0]

    def mask_at(self, frame: int) -> BinaryMask | None:
        """Primary mask at an absolute frame index; None outside the span."""
        if frame < self.start_frame or frame > self.end_frame:
            return None
        return self.primary[frame - self.start_frame]

    def candidates_at(self, frame: int) -> CandidateMaskTriple | None:
        if frame < self.start_frame or frame > self.end_frame:
            return None
        return self.candidates[frame - self.start_frame]

    def __repr__(self) -> str:
        return f"Tubelet({self.id!r}, frames {self.start_frame}..{self.end_frame})"


class Embedding:
    """Unit-normalized feature vector; dot products are cosine similarities."""

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        arr = np.ascontiguousarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("embedding must be a 1-d vector")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > EMBED_NORM_TOL:
            raise ValueError(f"embedding norm {norm} is not 1 within {EMBED_NORM_TOL}")
        arr.setflags(write=False)
        self.values = arr

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def dot(self, other: "Embedding") -> float:
        return float(self.values @ other.values)


@dataclass(frozen=True)
class Description:
    """Structured transformation description returned by the describer."""

    action_verb: str
    objects: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if not self.action_verb:
            raise ValueError("action_verb must be nonempty")


def tubelet_id_for(start_frame: int, mask: BinaryMask) -> str:
    """Deterministic tubelet id derived from the seed query."""
    return f"t{start_frame:06d}_{mask_hash(mask).hex[:12]}"


class PerceptionBackend(ABC):
    """Read-only after construction; calls must be safe from multiple threads."""

    @property
    @abstractmethod
    def frame_size(self) -> FrameSize: ...

    @property
    @abstractmethod
    def num_frames(self) -> int: ...

    @property
    @abstractmethod
    def embed_dim(self) -> int: ...

    @abstractmethod
    def segment_entities(self, frame_index: int) -> list[BinaryMask]:
        """Pairwise-disjoint entity masks for one frame (overlaps pre-resolved)."""

    @abstractmethod
    def track(self, start_frame: int, mask: BinaryMask) -> Tubelet:
        """Propagate a nonempty mask forward to the end of the video."""

    @abstractmethod
    def embed(self, frame_index: int, mask: BinaryMask) -> Embedding:
        """Unit feature vector of a nonempty masked region."""

    @abstractmethod
    def describe(
        self,
        before_frame: int,
        after_frame: int,
        before_contours: Sequence[BinaryMask],
        after_contours: Sequence[BinaryMask],
    ) -> Description:
        """Describe the change between two frames given highlighted regions."""

    # shared precondition checks for implementations

    def _check_frame(self, frame_index: int) -> None:
        if not 0 <= frame_index < self.num_frames:
            raise ValueError(
                f"frame index {frame_index} out of range [0, {self.num_frames})"
            )

    def _check_track_query(self, start_frame: int, mask: BinaryMask) -> None:
        self._check_frame(start_frame)
        if mask.size != self.frame_size:
            raise ValueError(f"query mask size {mask.size} != backend {self.frame_size}")
        if mask.area == 0:
            raise ValueError("track() requires a nonempty query mask")

    def _check_embed_query(self, frame_index: int, mask: BinaryMask) -> None:
        self._check_frame(frame_index)
        if mask.size != self.frame_size:
            raise ValueError(f"query mask size {mask.size} != backend {self.frame_size}")
        if mask.area == 0:
            raise ValueError("embed() requires a nonempty mask")

    def _check_describe_query(
        self,
        before_frame: int,
        after_frame: int,
        before_contours: Sequence[BinaryMask],
        after_contours: Sequence[BinaryMask],
    ) -> None:
        self._check_frame(before_frame)
        self._check_frame(after_frame)
        if after_frame <= before_frame:
            raise ValueError("describe() requires after_frame > before_frame")
        if not before_contours or not after_contours:
            raise ValueError("describe() requires nonempty contour lists")


__all__ = [
    "CandidateMaskTriple",
    "Tubelet",
    "Embedding",
    "Description",
    "PerceptionBackend",
    "tubelet_id_for",
    "EMBED_NORM_TOL",
]
