"""Mask wire format: canonical RLE text and SHA-256 content hashes.

Masks are plain (H, W) bool arrays here. The text form is
``"W,H:r0,r1,..."`` with runs alternating false/true scanning row-major,
starting with a possibly-zero false-run; the hash is the SHA-256 of exactly
that ASCII string. Both must agree byte-for-byte with any consumer of the
bundles, which is pinned by the shared golden-vector fixtures.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RleError(ValueError):
    pass


def encode_runs(bits: np.ndarray) -> list[int]:
    flat = np.ascontiguousarray(bits, dtype=bool).reshape(-1)
    n = flat.shape[0]
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).tolist()
    if n and flat[0]:
        runs.insert(0, 0)
    return runs


def mask_to_text(bits: np.ndarray) -> str:
    h, w = bits.shape
    return f"{w},{h}:" + ",".join(str(r) for r in encode_runs(bits))


def mask_from_text(text: str) -> np.ndarray:
    head, sep, body = text.partition(":")
    if not sep:
        raise RleError(f"RLE text missing ':' separator: {text!r}")
    parts = head.split(",")
    if len(parts) != 2:
        raise RleError(f"RLE text header must be 'W,H': {text!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
        runs = [int(r) for r in body.split(",")] if body else []
    except ValueError as exc:
        raise RleError(f"non-integer field in RLE text: {text!r}") from exc
    validate_runs(width, height, runs, text)
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs).reshape(height, width)


def validate_runs(width: int, height: int, runs: list[int], where: str) -> None:
    if width < 1 or height < 1:
        raise RleError(f"non-positive frame size: {where!r}")
    if not runs or runs[0] < 0 or any(r < 1 for r in runs[1:]):
        raise RleError(f"non-canonical run list: {where!r}")
    if sum(runs) != width * height:
        raise RleError(f"runs sum to {sum(runs)}, expected {width * height}: {where!r}")


def mask_sha(bits: np.ndarray) -> str:
    return hashlib.sha256(mask_to_text(bits).encode("ascii")).hexdigest()


def area(bits: np.ndarray) -> int:
    return int(np.count_nonzero(bits))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.count_nonzero(a & b))
    union = area(a) + area(b) - inter
    return inter / union if union else 1.0


def cover_fraction(a: np.ndarray, b: np.ndarray) -> float:
    return int(np.count_nonzero(a & b)) / area(a)


def describe_query_hash(before: list[np.ndarray], after: list[np.ndarray]) -> str:
    hashes = sorted(mask_sha(m) for m in (*before, *after))
    return hashlib.sha256("".join(hashes).encode("ascii")).hexdigest()
