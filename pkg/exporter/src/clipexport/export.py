"""Export a clip into a replay bundle.

The consuming pipeline decides which tracks to start, which frames to embed,
and which change events to describe purely from the backend's answers, so the
exporter replays the same control flow here (same coverage rules, seeding
order, threshold tests, and query construction) and records every model
answer under the key the consumer will use: frame index plus the canonical
mask hash. A faithful mirror means a replayed run never misses a record; the
verify module's dry-run cross-check proves it per bundle.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .models import ModelSuite, default_suite
from .rle import (
    RleError,
    area,
    cover_fraction,
    describe_query_hash,
    mask_from_text,
    mask_sha,
    mask_to_text,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExportConfig:
    tau_coverage: float = 0.25
    tau_remove: float = 0.9
    min_area_fraction: float = 1.0 / 625.0
    processing_stride: int = 1
    tau_prox: float = 0.3
    tau_sem: float = 0.7
    embed_stride: int = 1
    dilate_r1: int = 3
    dilate_r2: int = 9
    superset: bool = False  # also record tracks/embeds for every entity
    with_frames: bool = False  # copy frames into the bundle


class ExportError(Exception):
    pass


def load_frames(path: Path) -> list[np.ndarray]:
    """Clip = directory of image frames, ordered by filename."""
    path = Path(path)
    if not path.is_dir():
        raise ExportError(f"clip path {path} is not a directory")
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in (".png", ".bmp", ".jpg", ".jpeg")
    )
    if not files:
        raise ExportError(f"no image frames in {path}")
    frames = []
    shape = None
    for p in files:
        arr = np.asarray(Image.open(p).convert("RGB"))
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ExportError(f"{p}: frame shape {arr.shape} differs from {shape}")
        frames.append(arr)
    return frames


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
    os.replace(tmp, path)


class _Recorder:
    """Write-once record files plus a per-key error log."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.errors: list[dict] = []
        self.counts = {"entities": 0, "tracks": 0, "embeds": 0, "descriptions": 0}

    def write_once(self, kind: str, relative: str, obj) -> None:
        path = self.root / relative
        if not path.exists():
            _write_json(path, obj)
            self.counts[kind] += 1

    def record_error(self, key: str, exc: Exception) -> None:
        self.errors.append({"key": key, "error": f"{type(exc).__name__}: {exc}"})

    def finish(self) -> None:
        if self.errors:
            _write_json(self.root / "errors.json", self.errors)


class _Track:
    __slots__ = ("start", "primary", "candidates")

    def __init__(self, start, primary, candidates):
        self.start = start
        self.primary = primary
        self.candidates = candidates

    def mask_at(self, t):
        if t < self.start or t - self.start >= len(self.primary):
            return None
        return self.primary[t - self.start]

    def candidates_at(self, t):
        return self.candidates[t - self.start]


class _Mirror:
    def __init__(self, frames, suite: ModelSuite, cfg: ExportConfig, rec: _Recorder):
        self.frames = frames
        self.suite = suite
        self.cfg = cfg
        self.rec = rec
        self.num_frames = len(frames)
        self._entities: dict[int, list[np.ndarray]] = {}
        self._embeds: dict[tuple[int, str], np.ndarray] = {}

    # recorded model calls

    def entities(self, t: int) -> list[np.ndarray]:
        if t not in self._entities:
            masks = self.suite.segmenter.segment(self.frames[t])
            self.rec.write_once(
                "entities", f"entities/{t:06d}.json", [{"rle": mask_to_text(m)} for m in masks]
            )
            self._entities[t] = masks
        return self._entities[t]

    def track(self, start: int, mask: np.ndarray) -> _Track:
        primary, candidates = self.suite.tracker.track(self.frames, start, mask)
        record = {
            "primary": [mask_to_text(m) for m in primary],
            "candidates": [[mask_to_text(m) for m in triple] for triple in candidates],
        }
        self.rec.write_once("tracks", f"tracks/{start:06d}_{mask_sha(mask)}.json", record)
        return _Track(start, primary, candidates)

    def embed(self, t: int, mask: np.ndarray) -> np.ndarray:
        key = (t, mask_sha(mask))
        if key not in self._embeds:
            v = np.asarray(self.suite.embedder.embed(self.frames[t], mask), dtype=np.float64)
            self.rec.write_once(
                "embeds", f"embeds/{t:06d}_{key[1]}.json", {"v": [float(x) for x in v]}
            )
            self._embeds[key] = v
        return self._embeds[key]

    def describe(self, s: int, before_contours, after_contours) -> None:
        qhash = describe_query_hash(before_contours, after_contours)
        key = f"descriptions/{0:06d}_{s:06d}_{qhash}.json"
        try:
            desc = self.suite.describer.describe(
                self.frames[0], self.frames[s], before_contours, after_contours
            )
            self.rec.write_once("descriptions", key, desc)
        except Exception as exc:  # export continues; the key is logged
            self.rec.record_error(key, exc)

    # consumer control flow, replicated

    def resolve_initial_overlaps(self, entities, prompt):
        out = []
        for entity in entities:
            if area(entity) == 0:
                continue
            c = cover_fraction(entity, prompt)
            if c < self.cfg.tau_coverage:
                kept = entity
            elif c < self.cfg.tau_remove:
                kept = entity & ~prompt
            else:
                continue
            if area(kept) > 0 and area(kept) / kept.size >= self.cfg.min_area_fraction:
                out.append(kept)
        return out

    def run(self, prompt: np.ndarray) -> dict:
        cfg = self.cfg
        prompt_track = self.track(0, prompt)
        seen = {(0, mask_sha(prompt))}
        pool = [prompt_track]

        resolved = self.resolve_initial_overlaps(self.entities(0), prompt)
        for entity in sorted(resolved, key=lambda m: (-area(m), mask_sha(m))):
            key = (0, mask_sha(entity))
            if key in seen:
                continue
            seen.add(key)
            pool.append(self.track(0, entity))

        late: list[_Track] = []
        for t in range(cfg.processing_stride, self.num_frames, cfg.processing_stride):
            covered = np.zeros(prompt.shape, dtype=bool)
            for track in pool:
                m = track.mask_at(t)
                if m is not None:
                    covered |= m
            candidates = [
                e
                for e in self.entities(t)
                if area(e) > 0 and area(e) / e.size >= cfg.min_area_fraction
            ]
            for entity in sorted(candidates, key=lambda m: (-area(m), mask_sha(m))):
                key = (t, mask_sha(entity))
                if key in seen:
                    continue
                uncovered = 1.0 - int(np.count_nonzero(entity & covered)) / area(entity)
                if uncovered >= 1.0 - cfg.tau_coverage:
                    seen.add(key)
                    track = self.track(t, entity)
                    pool.append(track)
                    late.append(track)
                    m = track.mask_at(t)
                    if m is not None:
                        covered |= m

        accepted = self._filter(prompt_track, late)
        self._describe_events(prompt_track, accepted)
        if cfg.superset:
            self._record_superset(pool, seen)
        return {
            "num_frames": self.num_frames,
            "pool_tracks": len(pool),
            "late_tracks": len(late),
            "accepted_tracks": len(accepted),
        }

    def _nonempty_frames(self, track, lo, hi):
        frames = []
        for t in range(lo, hi):
            m = track.mask_at(t)
            if m is not None and area(m) > 0:
                frames.append(t)
        return frames[:: self.cfg.embed_stride]

    def _filter(self, prompt_track, late):
        cfg = self.cfg
        ordered = sorted(
            late,
            key=lambda tr: (tr.start, -area(tr.primary[0]), mask_sha(tr.primary[0])),
        )
        accepted = []
        for cand in ordered:
            s = cand.start
            seed = cand.primary[0]
            if area(seed) == 0:
                continue
            triple = prompt_track.candidates_at(s)
            s_prox = max(int(np.count_nonzero(seed & m)) / area(seed) for m in triple)
            prompt_frames = self._nonempty_frames(prompt_track, 0, s)
            cand_frames = self._nonempty_frames(cand, s, self.num_frames)
            if not prompt_frames or not cand_frames:
                continue
            p = np.stack([self.embed(t, prompt_track.mask_at(t)) for t in prompt_frames])
            c = np.stack([self.embed(t, cand.mask_at(t)) for t in cand_frames])
            s_sem = float(np.max(p @ c.T))
            if s_prox > cfg.tau_prox and s_sem > cfg.tau_sem:
                accepted.append(cand)
        return accepted

    def _describe_events(self, prompt_track, accepted):
        for idx, new in enumerate(accepted):
            s = new.start
            pre = [prompt_track] + [tr for tr in accepted[:idx] if tr.start < s]
            contours = []
            for track in pre + [new]:
                m = track.mask_at(s)
                if m is not None and area(m) > 0:
                    contours.append(m)
            self.describe(s, [prompt_track.primary[0]], contours)

    def _record_superset(self, pool, seen):
        # every entity becomes a track; every nonempty track frame gets an
        # embedding (no stride), so threshold/stride sweeps replay too
        for t in range(self.num_frames):
            for entity in self.entities(t):
                if area(entity) == 0:
                    continue
                key = (t, mask_sha(entity))
                if key in seen:
                    continue
                seen.add(key)
                pool.append(self.track(t, entity))
        for track in pool:
            for t in range(track.start, self.num_frames):
                m = track.mask_at(t)
                if m is not None and area(m) > 0:
                    self.embed(t, m)


def export_bundle(
    clip_path: Path,
    prompt: np.ndarray | str,
    out_dir: Path,
    cfg: ExportConfig | None = None,
    suite: ModelSuite | None = None,
) -> dict:
    """Run the models over a clip and write a replay bundle; returns a summary."""
    cfg = cfg or ExportConfig()
    suite = suite or default_suite(r1=cfg.dilate_r1, r2=cfg.dilate_r2)
    frames = load_frames(clip_path)
    h, w = frames[0].shape[:2]
    if isinstance(prompt, str):
        try:
            prompt = mask_from_text(prompt)
        except RleError as exc:
            raise ExportError(f"bad prompt mask: {exc}") from exc
    if prompt.shape != (h, w):
        raise ExportError(f"prompt shape {prompt.shape} does not match frames {(h, w)}")
    if area(prompt) == 0:
        raise ExportError("prompt mask is empty")

    out_dir = Path(out_dir)
    rec = _Recorder(out_dir)
    _write_json(
        out_dir / "meta.json",
        {
            "width": w,
            "height": h,
            "num_frames": len(frames),
            "embed_dim": suite.embedder.dim,
            "format_version": FORMAT_VERSION,
            "extras": {"models": suite.pins(), "config": asdict(cfg)},
        },
    )
    if cfg.with_frames:
        frames_dir = out_dir / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(frames):
            Image.fromarray(frame).save(frames_dir / f"{t:06d}.png")

    mirror = _Mirror(frames, suite, cfg, rec)
    summary = mirror.run(prompt)
    rec.finish()
    summary.update(rec.counts)
    summary["errors"] = len(rec.errors)
    summary["prompt"] = mask_to_text(prompt)
    _write_json(out_dir / "export_summary.json", summary)
    return summary
