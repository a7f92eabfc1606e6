"""File-replay backend and the recording wrapper that produces its bundles.

A bundle is a directory of UTF-8 JSON records keyed by frame index and the
canonical mask hash, so a replayed run never depends on the recording run's
iteration order:

    meta.json                                  width/height/num_frames/embed_dim
    entities/<frame:06d>.json                  [{"rle": "W,H:..."} ...]
    tracks/<start:06d>_<hash>.json             {"primary": [...], "candidates": [[m1,m2,m3] ...]}
    embeds/<frame:06d>_<hash>.json             {"v": [floats]}
    descriptions/<before:06d>_<after:06d>_<qhash>.json
    frames/<frame:06d>.png                     optional, for exporters that need pixels

``qhash`` is the SHA-256 over the concatenated, lexicographically sorted
hashes of every contour mask in the query (before and after lists combined).

Replay lookups are pure: the loader reads every record up front (validating
structure and frame sizes) and the backend decodes on demand without shared
mutable state, so concurrent calls are safe. A missing record raises
BundleIncompleteError carrying the key.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .._io import write_json
from ..errors import BundleIncompleteError, BundleLoadError
from ..maskcore import BinaryMask, FrameSize, mask_from_text, mask_hash, mask_to_text
from . import (
    CandidateMaskTriple,
    Description,
    Embedding,
    PerceptionBackend,
    Tubelet,
    tubelet_id_for,
)

FORMAT_VERSION = 1

_TRACK_RE = re.compile(r"^(\d{6})_([0-9a-f]{64})\.json$")
_EMBED_RE = re.compile(r"^(\d{6})_([0-9a-f]{64})\.json$")
_ENTITY_RE = re.compile(r"^(\d{6})\.json$")
_DESC_RE = re.compile(r"^(\d{6})_(\d{6})_([0-9a-f]{64})\.json$")


def describe_query_hash(
    before_contours: Sequence[BinaryMask], after_contours: Sequence[BinaryMask]
) -> str:
    hashes = sorted(mask_hash(m).hex for m in (*before_contours, *after_contours))
    return hashlib.sha256("".join(hashes).encode("ascii")).hexdigest()


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleLoadError(f"{path}: not valid JSON: {exc}") from exc


def _check_rle_header(text: str, size: FrameSize, where: Path) -> None:
    head = text.split(":", 1)[0]
    if head != f"{size.width},{size.height}":
        raise BundleLoadError(
            f"{where}: RLE frame size {head!r} does not match bundle {size.width},{size.height}"
        )


class ReplayBackend(PerceptionBackend):
    """Answers every contract call from a recorded bundle; pure lookups."""

    def __init__(self, root: Path | str):
        root = Path(root)
        meta_path = root / "meta.json"
        if not meta_path.is_file():
            raise BundleLoadError(f"{root}: missing meta.json")
        meta = _read_json(meta_path)
        try:
            self._size = FrameSize(int(meta["width"]), int(meta["height"]))
            self._num_frames = int(meta["num_frames"])
            self._embed_dim = int(meta["embed_dim"])
            version = int(meta["format_version"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleLoadError(f"{meta_path}: malformed meta record: {exc}") from exc
        if version != FORMAT_VERSION:
            raise BundleLoadError(f"{meta_path}: unsupported format_version {version}")
        if self._num_frames < 1:
            raise BundleLoadError(f"{meta_path}: num_frames must be >= 1")
        self._root = root
        self._entities: dict[int, list[str]] = {}
        self._tracks: dict[tuple[int, str], dict] = {}
        self._embeds: dict[tuple[int, str], list[float]] = {}
        self._descriptions: dict[tuple[int, int, str], dict] = {}
        self._load_records()

    def _load_records(self) -> None:
        for path in sorted((self._root / "entities").glob("*.json")):
            m = _ENTITY_RE.match(path.name)
            if not m:
                raise BundleLoadError(f"{path}: bad entities record name")
            data = _read_json(path)
            if not isinstance(data, list):
                raise BundleLoadError(f"{path}: entities record must be a list")
            rles = []
            for item in data:
                if not isinstance(item, dict) or "rle" not in item:
                    raise BundleLoadError(f"{path}: entity item missing 'rle'")
                _check_rle_header(item["rle"], self._size, path)
                rles.append(item["rle"])
            self._entities[int(m.group(1))] = rles
        for path in sorted((self._root / "tracks").glob("*.json")):
            m = _TRACK_RE.match(path.name)
            if not m:
                raise BundleLoadError(f"{path}: bad tracks record name")
            start = int(m.group(1))
            data = _read_json(path)
            span = self._num_frames - start
            if (
                not isinstance(data, dict)
                or not isinstance(data.get("primary"), list)
                or not isinstance(data.get("candidates"), list)
                or len(data["primary"]) != span
                or len(data["candidates"]) != span
            ):
                raise BundleLoadError(
                    f"{path}: track record must carry {span} primary masks and candidate triples"
                )
            for rle in data["primary"]:
                _check_rle_header(rle, self._size, path)
            for triple in data["candidates"]:
                if not isinstance(triple, list) or len(triple) != 3:
                    raise BundleLoadError(f"{path}: candidate entry is not a triple")
                for rle in triple:
                    _check_rle_header(rle, self._size, path)
            self._tracks[(start, m.group(2))] = data
        for path in sorted((self._root / "embeds").glob("*.json")):
            m = _EMBED_RE.match(path.name)
            if not m:
                raise BundleLoadError(f"{path}: bad embeds record name")
            data = _read_json(path)
            if not isinstance(data, dict) or not isinstance(data.get("v"), list):
                raise BundleLoadError(f"{path}: embed record must carry 'v'")
            if len(data["v"]) != self._embed_dim:
                raise BundleLoadError(
                    f"{path}: embedding has {len(data['v'])} dims, meta says {self._embed_dim}"
                )
            self._embeds[(int(m.group(1)), m.group(2))] = data["v"]
        for path in sorted((self._root / "descriptions").glob("*.json")):
            m = _DESC_RE.match(path.name)
            if not m:
                raise BundleLoadError(f"{path}: bad descriptions record name")
            data = _read_json(path)
            if not isinstance(data, dict) or "action_verb" not in data or "objects" not in data:
                raise BundleLoadError(f"{path}: description record needs action_verb and objects")
            self._descriptions[(int(m.group(1)), int(m.group(2)), m.group(3))] = data

    @property
    def frame_size(self) -> FrameSize:
        return self._size

    @property
    def num_frames(self) -> int:
        return self._num_frames

    @property
    def embed_dim(self) -> int:
        return self._embed_dim

    def segment_entities(self, frame_index: int) -> list[BinaryMask]:
        self._check_frame(frame_index)
        rles = self._entities.get(frame_index)
        if rles is None:
            raise BundleIncompleteError(f"entities/{frame_index:06d}")
        return [self._decode(rle, f"entities/{frame_index:06d}.json") for rle in rles]

    def track(self, start_frame: int, mask: BinaryMask) -> Tubelet:
        self._check_track_query(start_frame, mask)
        key_hash = mask_hash(mask).hex
        record = self._tracks.get((start_frame, key_hash))
        where = f"tracks/{start_frame:06d}_{key_hash}"
        if record is None:
            raise BundleIncompleteError(where)
        primary = [self._decode(rle, where) for rle in record["primary"]]
        candidates = [
            CandidateMaskTriple(*(self._decode(rle, where) for rle in triple))
            for triple in record["candidates"]
        ]
        try:
            return Tubelet(tubelet_id_for(start_frame, mask), start_frame, primary, candidates)
        except ValueError as exc:
            raise BundleLoadError(f"{where}: {exc}") from exc

    def embed(self, frame_index: int, mask: BinaryMask) -> Embedding:
        self._check_embed_query(frame_index, mask)
        key_hash = mask_hash(mask).hex
        values = self._embeds.get((frame_index, key_hash))
        where = f"embeds/{frame_index:06d}_{key_hash}"
        if values is None:
            raise BundleIncompleteError(where)
        try:
            return Embedding(np.asarray(values, dtype=np.float64))
        except ValueError as exc:
            raise BundleLoadError(f"{where}: {exc}") from exc

    def describe(
        self,
        before_frame: int,
        after_frame: int,
        before_contours: Sequence[BinaryMask],
        after_contours: Sequence[BinaryMask],
    ) -> Description:
        self._check_describe_query(before_frame, after_frame, before_contours, after_contours)
        qhash = describe_query_hash(before_contours, after_contours)
        record = self._descriptions.get((before_frame, after_frame, qhash))
        where = f"descriptions/{before_frame:06d}_{after_frame:06d}_{qhash}"
        if record is None:
            raise BundleIncompleteError(where)
        try:
            return Description(
                str(record["action_verb"]),
                tuple((int(i), str(text)) for i, text in record["objects"]),
            )
        except (TypeError, ValueError) as exc:
            raise BundleLoadError(f"{where}: {exc}") from exc

    def _decode(self, rle: str, where: str) -> BinaryMask:
        try:
            return mask_from_text(rle)
        except Exception as exc:
            raise BundleLoadError(f"{where}: {exc}") from exc


def load_replay_bundle(path: Path | str) -> ReplayBackend:
    return ReplayBackend(path)


class RecordingBackend(PerceptionBackend):
    """Delegates to another backend and writes every answer into a bundle.

    Running the pipeline through this wrapper records, by construction,
    exactly the record set a replayed run with the same configuration needs.
    """

    def __init__(self, inner: PerceptionBackend, root: Path | str):
        self._inner = inner
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        write_json(
            self._root / "meta.json",
            {
                "width": inner.frame_size.width,
                "height": inner.frame_size.height,
                "num_frames": inner.num_frames,
                "embed_dim": inner.embed_dim,
                "format_version": FORMAT_VERSION,
            },
        )

    @property
    def frame_size(self) -> FrameSize:
        return self._inner.frame_size

    @property
    def num_frames(self) -> int:
        return self._inner.num_frames

    @property
    def embed_dim(self) -> int:
        return self._inner.embed_dim

    def _write_once(self, relative: str, obj) -> None:
        path = self._root / relative
        if not path.exists():
            write_json(path, obj)

    def segment_entities(self, frame_index: int) -> list[BinaryMask]:
        masks = self._inner.segment_entities(frame_index)
        self._write_once(
            f"entities/{frame_index:06d}.json", [{"rle": mask_to_text(m)} for m in masks]
        )
        return masks

    def track(self, start_frame: int, mask: BinaryMask) -> Tubelet:
        tubelet = self._inner.track(start_frame, mask)
        record = {
            "primary": [mask_to_text(m) for m in tubelet.primary],
            "candidates": [[mask_to_text(m) for m in triple] for triple in tubelet.candidates],
        }
        self._write_once(f"tracks/{start_frame:06d}_{mask_hash(mask).hex}.json", record)
        return tubelet

    def embed(self, frame_index: int, mask: BinaryMask) -> Embedding:
        embedding = self._inner.embed(frame_index, mask)
        self._write_once(
            f"embeds/{frame_index:06d}_{mask_hash(mask).hex}.json",
            {"v": [float(v) for v in embedding.values]},
        )
        return embedding

    def describe(
        self,
        before_frame: int,
        after_frame: int,
        before_contours: Sequence[BinaryMask],
        after_contours: Sequence[BinaryMask],
    ) -> Description:
        desc = self._inner.describe(before_frame, after_frame, before_contours, after_contours)
        qhash = describe_query_hash(before_contours, after_contours)
        self._write_once(
            f"descriptions/{before_frame:06d}_{after_frame:06d}_{qhash}.json",
            {
                "action_verb": desc.action_verb,
                "objects": [[i, text] for i, text in desc.objects],
            },
        )
        return desc
