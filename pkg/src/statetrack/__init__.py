"""State-change-aware object tracking.

Given a video (through a perception backend), an initial object mask, and the
pipeline configuration, the package builds a spatiotemporal tubelet partition,
recovers post-transformation object fragments by spatial-proximity and
semantic-consistency filtering, emits a transformation state graph, and scores
predictions with tracking and state-graph metrics.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BackendError,
    BundleIncompleteError,
    BundleLoadError,
    JudgeProtocolError,
    MalformedRleError,
    StateTrackError,
    ValidationError,
)
from .maskcore import (  # noqa: F401
    BinaryMask,
    FrameSize,
    MaskHash,
    RleMask,
    area_fraction,
    cover,
    decode_rle,
    encode_rle,
    iou,
    mask_from_text,
    mask_hash,
    mask_to_text,
)

__all__ = [
    "__version__",
    "BackendError",
    "BundleIncompleteError",
    "BundleLoadError",
    "JudgeProtocolError",
    "MalformedRleError",
    "StateTrackError",
    "ValidationError",
    "BinaryMask",
    "FrameSize",
    "MaskHash",
    "RleMask",
    "area_fraction",
    "cover",
    "decode_rle",
    "encode_rle",
    "iou",
    "mask_from_text",
    "mask_hash",
    "mask_to_text",
]
