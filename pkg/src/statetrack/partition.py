"""Spatiotemporal partition of a video into tubelets.

Frame 0: every segmented entity (after overlap resolution against the prompt)
is tracked forward alongside the prompt. Later frames: any entity whose area
is insufficiently covered by the pool's current masks seeds a new
"late-emergent" tubelet, so the pool ends up covering nearly every pixel the
backend can see. Late-emergent tubelets are the transformation candidates the
reasoning stage filters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .backend import PerceptionBackend, Tubelet
from .maskcore import BinaryMask, area_fraction, cover, mask_hash, subtract

ORIGIN_PROMPT = "prompt"
ORIGIN_INITIAL = "initial_frame"
ORIGIN_LATE = "late_emergent"


@dataclass(frozen=True)
class PartitionConfig:
    tau_coverage: float = 0.25
    tau_remove: float = 0.9
    min_area_fraction: float = 1.0 / 625.0
    processing_stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.tau_coverage < self.tau_remove <= 1.0:
            raise ValueError("require 0 < tau_coverage < tau_remove <= 1")
        if not 0.0 <= self.min_area_fraction < 1.0:
            raise ValueError("min_area_fraction must be in [0, 1)")
        if self.processing_stride < 1:
            raise ValueError("processing_stride must be >= 1")


@dataclass(frozen=True)
class PoolEntry:
    tubelet: Tubelet
    origin: str  # ORIGIN_INITIAL | ORIGIN_LATE


@dataclass(frozen=True)
class PartitionPool:
    prompt_tubelet: Tubelet
    others: tuple[PoolEntry, ...] = ()

    def __iter__(self) -> Iterator[Tubelet]:
        yield self.prompt_tubelet
        for entry in self.others:
            yield entry.tubelet

    def late_emergent(self) -> list[Tubelet]:
        return [e.tubelet for e in self.others if e.origin == ORIGIN_LATE]

    def initial(self) -> list[Tubelet]:
        return [e.tubelet for e in self.others if e.origin == ORIGIN_INITIAL]

    def union_mask_at(self, frame: int) -> BinaryMask:
        """Union of every pool tubelet's primary mask at one frame."""
        size = self.prompt_tubelet.seed_mask.size
        acc = np.zeros(size.pixels, dtype=np.uint8)
        for tub in self:
            m = tub.mask_at(frame)
            if m is not None:
                kernels.or_into(acc, m.flat_u8())
        return BinaryMask(size, acc.view(bool).reshape(size.height, size.width))


def resolve_initial_overlaps(
    entities: list[BinaryMask], prompt: BinaryMask, cfg: PartitionConfig
) -> list[BinaryMask]:
    """Merge the prompt into the frame-0 entity set.

    Entities barely touching the prompt are kept as-is, entities mostly inside
    it are dropped, and the ones in between lose their overlap with the
    prompt. Results below the minimum area fraction are discarded. The prompt
    itself is not part of the returned list.
    """
    if prompt.area == 0:
        raise ValueError("prompt mask must be nonempty")
    for entity in entities:
        if entity.size != prompt.size:
            raise ValueError(f"entity size {entity.size} != prompt size {prompt.size}")
    out: list[BinaryMask] = []
    for entity in entities:
        if entity.area == 0:
            continue
        c = cover(entity, prompt)
        if c < cfg.tau_coverage:
            kept = entity
        elif c < cfg.tau_remove:
            kept = subtract(entity, prompt)
        else:
            continue
        if area_fraction(kept) >= cfg.min_area_fraction and kept.area > 0:
            out.append(kept)
    return out


def untracked_fraction(entity: BinaryMask, pool: PartitionPool, frame: int) -> float:
    """Fraction of the entity not covered by any pool primary mask at the frame."""
    return 1.0 - cover(entity, pool.union_mask_at(frame))


def _seed_order(masks: list[BinaryMask]) -> list[BinaryMask]:
    return sorted(masks, key=lambda m: (-m.area, mask_hash(m).hex))


def build_partition(
    backend: PerceptionBackend, prompt: BinaryMask, cfg: PartitionConfig | None = None
) -> PartitionPool:
    """Track the prompt plus every entity, seeding new tracks for uncovered regions."""
    cfg = cfg or PartitionConfig()
    if prompt.area == 0:
        raise ValueError("prompt mask must be nonempty")
    if prompt.size != backend.frame_size:
        raise ValueError(f"prompt size {prompt.size} != backend {backend.frame_size}")

    size = backend.frame_size
    num_frames = backend.num_frames
    prompt_tubelet = backend.track(0, prompt)
    seen_seeds = {(0, mask_hash(prompt).hex)}
    entries: list[PoolEntry] = []

    resolved = resolve_initial_overlaps(backend.segment_entities(0), prompt, cfg)
    for entity in _seed_order(resolved):
        key = (0, mask_hash(entity).hex)
        if key in seen_seeds:
            continue
        seen_seeds.add(key)
        entries.append(PoolEntry(backend.track(0, entity), ORIGIN_INITIAL))

    pool_tubelets = [prompt_tubelet] + [e.tubelet for e in entries]
    for frame in range(cfg.processing_stride, num_frames, cfg.processing_stride):
        covered = np.zeros(size.pixels, dtype=np.uint8)
        for tub in pool_tubelets:
            m = tub.mask_at(frame)
            if m is not None:
                kernels.or_into(covered, m.flat_u8())
        candidates = [
            e
            for e in backend.segment_entities(frame)
            if e.area > 0 and area_fraction(e) >= cfg.min_area_fraction
        ]
        for entity in _seed_order(candidates):
            key = (frame, mask_hash(entity).hex)
            if key in seen_seeds:
                continue
            covered_fraction = kernels.count_and(entity.flat_u8(), covered) / entity.area
            if 1.0 - covered_fraction >= 1.0 - cfg.tau_coverage:
                seen_seeds.add(key)
                tub = backend.track(frame, entity)
                entries.append(PoolEntry(tub, ORIGIN_LATE))
                pool_tubelets.append(tub)
                m = tub.mask_at(frame)
                if m is not None:
                    kernels.or_into(covered, m.flat_u8())

    return PartitionPool(prompt_tubelet, tuple(entries))
