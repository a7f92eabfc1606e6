"""Binary masks, the run-length codec, set-algebra measures, and canonical hashing.

All values are immutable after construction and every operation is a pure
function, so masks can be shared freely across threads.

The canonical text form used in every serialized artifact is
``"W,H:r0,r1,..."`` where the runs alternate false/true scanning row-major and
start with a (possibly zero) false-run. The canonical hash of a mask is the
SHA-256 of exactly that ASCII string.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .errors import MalformedRleError


@dataclass(frozen=True)
class FrameSize:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame size must be positive, got {self.width}x{self.height}")

    @property
    def pixels(self) -> int:
        return self.width * self.height


class BinaryMask:
    """A width x height boolean pixel grid, scanned row-major."""

    __slots__ = ("size", "_bits", "_area", "_hash")

    def __init__(self, size: FrameSize, bits: np.ndarray):
        arr = np.ascontiguousarray(bits, dtype=bool)
        if arr.shape != (size.height, size.width):
            raise ValueError(
                f"bits shape {arr.shape} does not match frame size {size.width}x{size.height}"
            )
        arr.setflags(write=False)
        self.size = size
        self._bits = arr
        self._area: int | None = None
        self._hash: "MaskHash | None" = None

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "BinaryMask":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("mask array must be 2-dimensional")
        h, w = bits.shape
        return cls(FrameSize(w, h), bits)

    @classmethod
    def empty(cls, size: FrameSize) -> "BinaryMask":
        return cls(size, np.zeros((size.height, size.width), dtype=bool))

    @classmethod
    def full(cls, size: FrameSize) -> "BinaryMask":
        return cls(size, np.ones((size.height, size.width), dtype=bool))

    @property
    def array(self) -> np.ndarray:
        """Read-only (height, width) bool array."""
        return self._bits

    def flat_u8(self) -> np.ndarray:
        """Flat uint8 view of the bits (no copy); input format of the kernels."""
        return self._bits.reshape(-1).view(np.uint8)

    @property
    def area(self) -> int:
        if self._area is None:
            self._area = kernels.count_true(self.flat_u8())
        return self._area

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.size == other.size and np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash(mask_hash(self).digest)

    def __repr__(self) -> str:
        return f"BinaryMask({self.size.width}x{self.size.height}, area={self.area})"


@dataclass(frozen=True)
class RleMask:
    """Canonical run-length form: alternating runs starting with a false-run.

    Canonical means runs[0] >= 0 and every later run is strictly positive, so
    each mask has exactly one encoding (the hash preimage is unambiguous).
    """

    size: FrameSize
    runs: tuple[int, ...]


@dataclass(frozen=True)
class MaskHash:
    """SHA-256 over the canonical RLE text form."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != 32:
            raise ValueError("mask hash digest must be 32 bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()


def encode_rle(mask: BinaryMask) -> RleMask:
    """Canonical run-length encoding of a mask."""
    return RleMask(mask.size, tuple(kernels.encode_runs(mask.flat_u8())))


def decode_rle(rle: RleMask) -> BinaryMask:
    """Inverse of encode_rle; raises MalformedRleError unless runs sum to W*H."""
    try:
        buf = kernels.decode_runs(rle.runs, rle.size.pixels)
    except ValueError as exc:
        raise MalformedRleError(
            f"bad RLE for {rle.size.width}x{rle.size.height} frame: {exc}"
        ) from exc
    return BinaryMask(rle.size, buf.view(bool).reshape(rle.size.height, rle.size.width))


def rle_to_text(rle: RleMask) -> str:
    return f"{rle.size.width},{rle.size.height}:" + ",".join(str(r) for r in rle.runs)


def rle_from_text(text: str) -> RleMask:
    """Parse the canonical text form, rejecting non-canonical or malformed input."""
    head, sep, body = text.partition(":")
    if not sep:
        raise MalformedRleError(f"RLE text missing ':' separator: {text!r}")
    parts = head.split(",")
    if len(parts) != 2:
        raise MalformedRleError(f"RLE text header must be 'W,H': {text!r}")
    try:
        width, height = int(parts[0]), int(parts[1])
        runs = tuple(int(r) for r in body.split(",")) if body else ()
    except ValueError as exc:
        raise MalformedRleError(f"non-integer field in RLE text: {text!r}") from exc
    if width < 1 or height < 1:
        raise MalformedRleError(f"non-positive frame size in RLE text: {text!r}")
    if not runs or runs[0] < 0 or any(r < 1 for r in runs[1:]):
        raise MalformedRleError(f"non-canonical run list in RLE text: {text!r}")
    if sum(runs) != width * height:
        raise MalformedRleError(
            f"runs sum to {sum(runs)}, expected {width * height}: {text!r}"
        )
    return RleMask(FrameSize(width, height), runs)


def mask_to_text(mask: BinaryMask) -> str:
    return rle_to_text(encode_rle(mask))


def mask_from_text(text: str) -> BinaryMask:
    return decode_rle(rle_from_text(text))


def mask_hash(mask: BinaryMask) -> MaskHash:
    """Deterministic digest of the mask contents, independent of memory layout."""
    if mask._hash is None:
        digest = hashlib.sha256(mask_to_text(mask).encode("ascii")).digest()
        mask._hash = MaskHash(digest)
    return mask._hash


def _check_same_size(a: BinaryMask, b: BinaryMask) -> None:
    if a.size != b.size:
        raise ValueError(f"mask size mismatch: {a.size} vs {b.size}")


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    _check_same_size(a, b)
    return kernels.count_and(a.flat_u8(), b.flat_u8())


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 1.0
    return inter / union


def cover(a: BinaryMask, b: BinaryMask) -> float:
    """Fraction of a covered by b. a must be nonempty."""
    _check_same_size(a, b)
    if a.area == 0:
        raise ValueError("cover() requires a nonempty first mask")
    return kernels.count_and(a.flat_u8(), b.flat_u8()) / a.area


def area_fraction(mask: BinaryMask) -> float:
    return mask.area / mask.size.pixels


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same_size(a, b)
    return BinaryMask(a.size, a.array & b.array)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Pixels of a not in b."""
    _check_same_size(a, b)
    return BinaryMask(a.size, a.array & ~b.array)


def union_all(masks: Iterable[BinaryMask], size: FrameSize) -> BinaryMask:
    """Union of masks (possibly none), all of the given frame size."""
    acc = np.zeros(size.pixels, dtype=np.uint8)
    for m in masks:
        if m.size != size:
            raise ValueError(f"mask size mismatch: {m.size} vs {size}")
        kernels.or_into(acc, m.flat_u8())
    return BinaryMask(size, acc.view(bool).reshape(size.height, size.width))
