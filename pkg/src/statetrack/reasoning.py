"""Score late-emergent tubelets against the prompt track and pick the valid set.

A candidate survives when it starts close to where the tracker thought the
prompt object might be (overlap with any of the tracker's three alternative
masks at the candidate's first frame) and when some frame of it embeds close
to some pre-emergence frame of the prompt track. Both thresholds are strict
inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import PerceptionBackend, Tubelet
from .maskcore import intersection_area, mask_hash
from .partition import PartitionPool


@dataclass(frozen=True)
class ReasoningConfig:
    tau_prox: float = 0.3
    tau_sem: float = 0.7
    embed_stride: int = 1
    # ablation switches (CLI: --no-proximity / --no-semantic / --accept-all-candidates)
    use_proximity: bool = True
    use_semantic: bool = True
    accept_all: bool = False
    # experimental: let accepted candidates anchor later comparisons (default off,
    # which matches the plain prompt-only scoring rule)
    chain_anchors: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tau_prox <= 1.0:
            raise ValueError("tau_prox must be in [0, 1]")
        if not -1.0 <= self.tau_sem <= 1.0:
            raise ValueError("tau_sem must be in [-1, 1]")
        if self.embed_stride < 1:
            raise ValueError("embed_stride must be >= 1")


@dataclass(frozen=True)
class CandidateScore:
    tubelet_id: str
    s_prox: float
    s_sem: float
    accepted: bool


def spatial_proximity(candidate: Tubelet, prompt: Tubelet) -> float:
    """Best overlap fraction of the candidate's seed with the prompt's candidate masks."""
    s = candidate.start_frame
    if s <= prompt.start_frame:
        raise ValueError("candidate must start after the prompt track")
    seed = candidate.mask_at(s)
    if seed is None or seed.area == 0:
        raise ValueError("candidate mask at its start frame must be nonempty")
    triple = prompt.candidates_at(s)
    if triple is None:
        raise ValueError(f"prompt track does not span frame {s}")
    return max(intersection_area(seed, m) / seed.area for m in triple)


def _embedding_frames(tubelet: Tubelet, lo: int, hi: int, stride: int) -> list[int]:
    """Frames in [lo, hi) with a nonempty mask, subsampled; the first is always kept."""
    frames = []
    for t in range(lo, hi):
        m = tubelet.mask_at(t)
        if m is not None and m.area > 0:
            frames.append(t)
    return frames[::stride]


class _EmbedCache:
    def __init__(self, backend: PerceptionBackend):
        self._backend = backend
        self._values: dict[tuple[int, str], np.ndarray] = {}

    def get(self, tubelet: Tubelet, frame: int) -> np.ndarray:
        mask = tubelet.mask_at(frame)
        key = (frame, mask_hash(mask).hex)
        vec = self._values.get(key)
        if vec is None:
            vec = self._backend.embed(frame, mask).values
            self._values[key] = vec
        return vec


def semantic_consistency(
    candidate: Tubelet,
    prompt: Tubelet,
    backend: PerceptionBackend,
    cfg: ReasoningConfig | None = None,
    _cache: _EmbedCache | None = None,
) -> float:
    """Max cosine between pre-emergence prompt frames and any candidate frame."""
    cfg = cfg or ReasoningConfig()
    cache = _cache or _EmbedCache(backend)
    s = candidate.start_frame
    if s < 1:
        raise ValueError("candidate must start at frame 1 or later")
    prompt_frames = _embedding_frames(prompt, prompt.start_frame, s, cfg.embed_stride)
    if not prompt_frames:
        raise ValueError(f"prompt track has no nonempty mask before frame {s}")
    cand_frames = _embedding_frames(candidate, s, candidate.end_frame + 1, cfg.embed_stride)
    if not cand_frames:
        raise ValueError("candidate track has no nonempty mask")
    p = np.stack([cache.get(prompt, t) for t in prompt_frames])
    c = np.stack([cache.get(candidate, t) for t in cand_frames])
    return float(np.max(p @ c.T))


def filter_candidates(
    pool: PartitionPool, backend: PerceptionBackend, cfg: ReasoningConfig | None = None
) -> tuple[list[Tubelet], list[CandidateScore]]:
    """Split the pool's late-emergent tubelets into accepted and rejected.

    Initial-frame tubelets are never candidates. Scores are reported for every
    candidate, in (start frame, descending seed area, seed hash) order.
    """
    cfg = cfg or ReasoningConfig()
    cache = _EmbedCache(backend)
    prompt = pool.prompt_tubelet
    candidates = sorted(
        pool.late_emergent(),
        key=lambda t: (t.start_frame, -t.seed_mask.area, mask_hash(t.seed_mask).hex),
    )
    anchors = [prompt]
    valid: list[Tubelet] = []
    scores: list[CandidateScore] = []
    for cand in candidates:
        eligible = [a for a in anchors if a.start_frame < cand.start_frame]
        s_prox = max(spatial_proximity(cand, a) for a in eligible)
        s_sem = max(semantic_consistency(cand, a, backend, cfg, _cache=cache) for a in eligible)
        if cfg.accept_all:
            accepted = True
        else:
            ok_prox = (not cfg.use_proximity) or s_prox > cfg.tau_prox
            ok_sem = (not cfg.use_semantic) or s_sem > cfg.tau_sem
            accepted = ok_prox and ok_sem
        scores.append(CandidateScore(cand.id, s_prox, s_sem, accepted))
        if accepted:
            valid.append(cand)
            if cfg.chain_anchors:
                anchors.append(cand)
    return valid, scores
