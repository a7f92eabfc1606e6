"""End-to-end orchestration: run the tracker, record bundles, evaluate, sweep.

Every run writes the same artifact set (tracks.json, graph.json, scores.json,
partition.json, manifest.json) with atomic writes and deterministic bytes, so
a (config, seed) pair reproduces a run exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, kernels
from ._io import write_json, write_text
from .backend import PerceptionBackend, Tubelet
from .backend.replay import RecordingBackend, load_replay_bundle
from .backend.simulator import (
    GroundTruth,
    Scenario,
    load_scenario,
    scenario_to_json,
    simulate,
)
from .errors import ValidationError
from .judges import Judge, RuleBasedJudge
from .maskcore import BinaryMask, FrameSize, mask_from_text, mask_to_text
from .metrics import (
    TasReport,
    TrackingReport,
    evaluate_tas,
    tas_from_json,
    tas_to_json,
    tracking_scores,
)
from .partition import ORIGIN_PROMPT, PartitionConfig, PartitionPool, build_partition
from .reasoning import CandidateScore, ReasoningConfig, filter_candidates
from .stategraph import StateGraph, build_state_graph, parse_graph, serialize_graph


@dataclass(frozen=True)
class RunConfig:
    backend_spec: str  # "simulate:<scenario.json>" | "replay:<bundle dir>"
    prompt_spec: str  # "object:<id>" | "rle:<W,H:runs>" | "file:<path>"
    out_dir: Path
    seed: int = 0
    partition: PartitionConfig = PartitionConfig()
    reasoning: ReasoningConfig = ReasoningConfig()
    no_partition: bool = False  # base-tracker baseline: prompt track only


@dataclass(frozen=True)
class RunOutput:
    pool: PartitionPool
    tracks: tuple[Tubelet, ...]
    valid: tuple[Tubelet, ...]
    scores: tuple[CandidateScore, ...]
    graph: StateGraph
    manifest: dict
    out_dir: Path


def load_backend(cfg: RunConfig) -> tuple[PerceptionBackend, GroundTruth | None]:
    kind, sep, arg = cfg.backend_spec.partition(":")
    if not sep or not arg:
        raise ValidationError(
            f"backend spec must be 'simulate:<scenario>' or 'replay:<bundle>', got {cfg.backend_spec!r}"
        )
    if kind == "simulate":
        backend, gt = simulate(load_scenario(arg), cfg.seed)
        return backend, gt
    if kind == "replay":
        return load_replay_bundle(arg), None
    raise ValidationError(f"unknown backend kind {kind!r}")


def resolve_prompt(prompt_spec: str, backend: PerceptionBackend) -> BinaryMask:
    kind, sep, arg = prompt_spec.partition(":")
    if not sep:
        raise ValidationError(
            f"prompt spec must be 'object:<id>', 'rle:<text>' or 'file:<path>', got {prompt_spec!r}"
        )
    if kind == "object":
        if not hasattr(backend, "object_mask"):
            raise ValidationError("prompt 'object:<id>' is only valid with a simulate backend")
        mask = backend.object_mask(arg, 0)
    elif kind == "rle":
        mask = mask_from_text(arg)
    elif kind == "file":
        if not Path(arg).is_file():
            raise ValidationError(f"missing prompt file: {arg}")
        mask = mask_from_text(Path(arg).read_text(encoding="utf-8").strip())
    else:
        raise ValidationError(f"unknown prompt kind {kind!r}")
    if mask is None or mask.area == 0:
        raise ValidationError("prompt mask is empty at frame 0")
    if mask.size != backend.frame_size:
        raise ValidationError(
            f"prompt mask size {mask.size} does not match backend {backend.frame_size}"
        )
    return mask


def _manifest(cfg: RunConfig, prompt_mask: BinaryMask) -> dict:
    return {
        "backend": cfg.backend_spec,
        "prompt_spec": cfg.prompt_spec,
        "prompt": mask_to_text(prompt_mask),
        "seed": cfg.seed,
        "no_partition": cfg.no_partition,
        "partition_config": asdict(cfg.partition),
        "reasoning_config": asdict(cfg.reasoning),
        "versions": {
            "statetrack": __version__,
            "numpy": np.__version__,
            "kernels": kernels.BACKEND,
            "format": 1,
        },
    }


def _tracks_record(tracks: Sequence[Tubelet], size: FrameSize, num_frames: int) -> dict:
    return {
        "width": size.width,
        "height": size.height,
        "num_frames": num_frames,
        "tracks": [
            {
                "id": t.id,
                "start_frame": t.start_frame,
                "primary": [mask_to_text(m) for m in t.primary],
            }
            for t in tracks
        ],
    }


def run_with_backend(
    backend: PerceptionBackend, prompt_mask: BinaryMask, cfg: RunConfig
) -> RunOutput:
    """The pipeline proper: partition, filter, graph, then write all artifacts."""
    if prompt_mask.area == 0:
        raise ValidationError("prompt mask is empty")
    if prompt_mask.size != backend.frame_size:
        raise ValidationError("prompt mask size does not match the backend")

    if cfg.no_partition:
        pool = PartitionPool(backend.track(0, prompt_mask))
        valid: list[Tubelet] = []
        scores: list[CandidateScore] = []
    else:
        pool = build_partition(backend, prompt_mask, cfg.partition)
        valid, scores = filter_candidates(pool, backend, cfg.reasoning)
    graph = build_state_graph(pool.prompt_tubelet, valid, backend)
    tracks = (pool.prompt_tubelet, *valid)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(cfg, prompt_mask)
    write_json(out / "manifest.json", manifest, indent=2)
    write_json(
        out / "tracks.json",
        _tracks_record(tracks, backend.frame_size, backend.num_frames),
    )
    write_text(out / "graph.json", serialize_graph(graph))
    write_json(
        out / "scores.json",
        {
            "scores": [
                {
                    "tubelet_id": s.tubelet_id,
                    "s_prox": s.s_prox,
                    "s_sem": s.s_sem,
                    "accepted": s.accepted,
                }
                for s in scores
            ]
        },
        indent=2,
    )
    pool_entries = [(pool.prompt_tubelet, ORIGIN_PROMPT)] + [
        (e.tubelet, e.origin) for e in pool.others
    ]
    write_json(
        out / "partition.json",
        {
            "tubelets": [
                {
                    "id": t.id,
                    "origin": origin,
                    "start_frame": t.start_frame,
                    "primary": [mask_to_text(m) for m in t.primary],
                }
                for t, origin in pool_entries
            ]
        },
    )
    return RunOutput(pool, tracks, tuple(valid), tuple(scores), graph, manifest, out)


def run_pipeline(cfg: RunConfig) -> RunOutput:
    backend, _ = load_backend(cfg)
    prompt_mask = resolve_prompt(cfg.prompt_spec, backend)
    return run_with_backend(backend, prompt_mask, cfg)


# ground-truth files


def write_ground_truth(gt: GroundTruth, out_dir: Path) -> None:
    size = gt.lineage_masks[0].size
    write_json(
        out_dir / "gt_masks.json",
        {
            "width": size.width,
            "height": size.height,
            "num_frames": len(gt.lineage_masks),
            "frames": [mask_to_text(m) for m in gt.lineage_masks],
        },
    )
    write_json(out_dir / "tas.json", tas_to_json(gt.annotation))


def read_ground_truth_masks(path: Path) -> list[BinaryMask]:
    data = _read_json_file(path)
    try:
        masks = [mask_from_text(rle) for rle in data["frames"]]
        if len(masks) != int(data["num_frames"]):
            raise ValidationError(f"{path}: num_frames does not match the frames list")
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed ground-truth record: {exc}") from exc
    return masks


def simulate_bundle(
    scenario: Scenario,
    seed: int,
    out_dir: Path,
    partition: PartitionConfig | None = None,
    reasoning: ReasoningConfig | None = None,
) -> RunOutput:
    """Record a replay bundle plus ground truth from a scenario.

    The pipeline runs once against a recording wrapper, so the bundle holds
    exactly the records a replayed run with the same configuration asks for.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend, gt = simulate(scenario, seed)
    prompt_mask = backend.object_mask(scenario.prompt_object, 0)
    if prompt_mask is None or prompt_mask.area == 0:
        raise ValidationError(
            f"prompt object {scenario.prompt_object!r} has an empty mask at frame 0"
        )
    write_json(out_dir / "scenario.json", scenario_to_json(scenario), indent=2)
    write_ground_truth(gt, out_dir)
    write_text(out_dir / "prompt.txt", mask_to_text(prompt_mask) + "\n")
    recorder = RecordingBackend(backend, out_dir / "bundle")
    cfg = RunConfig(
        backend_spec=f"simulate:{out_dir / 'scenario.json'}",
        prompt_spec=f"object:{scenario.prompt_object}",
        out_dir=out_dir / "run",
        seed=seed,
        partition=partition or PartitionConfig(),
        reasoning=reasoning or ReasoningConfig(),
    )
    return run_with_backend(recorder, prompt_mask, cfg)


# evaluation

def _read_json_file(path: Path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"missing file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc


def read_tracks(path: Path) -> tuple[list[Tubelet], FrameSize, int]:
    data = _read_json_file(path)
    try:
        size = FrameSize(int(data["width"]), int(data["height"]))
        num_frames = int(data["num_frames"])
        tracks = []
        for t in data["tracks"]:
            primary = [mask_from_text(rle) for rle in t["primary"]]
            tracks.append(Tubelet.from_primary(str(t["id"]), int(t["start_frame"]), primary))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed tracks record: {exc}") from exc
    return tracks, size, num_frames


def evaluate_run(
    pred_dir: Path,
    truth_dir: Path,
    judge: Judge | None = None,
    out_path: Path | None = None,
    empty_frame_iou: float | None = 1.0,
) -> tuple[TrackingReport, TasReport]:
    """Score one pipeline output directory against ground-truth files."""
    pred_dir, truth_dir = Path(pred_dir), Path(truth_dir)
    judge = judge or RuleBasedJudge()
    tracks, size, num_frames = read_tracks(pred_dir / "tracks.json")
    graph_path = pred_dir / "graph.json"
    if not graph_path.is_file():
        raise ValidationError(f"missing file: {graph_path}")
    graph = parse_graph(graph_path.read_text(encoding="utf-8"))
    gt_masks = read_ground_truth_masks(truth_dir / "gt_masks.json")
    annotation = tas_from_json(_read_json_file(truth_dir / "tas.json"))
    if len(gt_masks) != num_frames:
        raise ValidationError(
            f"{truth_dir / 'gt_masks.json'}: {len(gt_masks)} frames but prediction has {num_frames}"
        )
    if gt_masks and gt_masks[0].size != size:
        raise ValidationError(f"{truth_dir / 'gt_masks.json'}: frame size mismatch")
    eval_frames = list(range(1, num_frames))
    tracking = tracking_scores(tracks, gt_masks, eval_frames, empty_frame_iou=empty_frame_iou)
    tas = evaluate_tas(graph, tracks, annotation, judge)
    if out_path is not None:
        write_json(
            Path(out_path),
            {"tracking": tracking.to_json(), "tas": tas.to_json()},
            indent=2,
        )
    return tracking, tas


# threshold sweep


def sweep_grid(
    scenarios: Sequence[tuple[str, Scenario]],
    seed: int,
    taus_prox: Sequence[float],
    taus_sem: Sequence[float],
    partition: PartitionConfig | None = None,
    embed_stride: int = 1,
) -> list[dict]:
    """Grid over the two filter thresholds, reusing per-scene partitions and scores.

    Proximity/semantic scores do not depend on the thresholds, so each scene is
    partitioned and scored once; cells only re-apply the acceptance rule.
    """
    partition_cfg = partition or PartitionConfig()
    prepared = []
    for name, scenario in scenarios:
        backend, gt = simulate(scenario, seed)
        prompt_mask = backend.object_mask(scenario.prompt_object, 0)
        if prompt_mask is None or prompt_mask.area == 0:
            raise ValidationError(f"scene {name!r}: prompt mask empty at frame 0")
        pool = build_partition(backend, prompt_mask, partition_cfg)
        _, scores = filter_candidates(
            pool, backend, ReasoningConfig(embed_stride=embed_stride, accept_all=True)
        )
        by_id = {t.id: t for t in pool.late_emergent()}
        prepared.append((name, pool, scores, by_id, gt))

    rows = []
    for tau_prox in taus_prox:
        for tau_sem in taus_sem:
            js, ps, rs = [], [], []
            for name, pool, scores, by_id, gt in prepared:
                accepted = [
                    by_id[s.tubelet_id]
                    for s in scores
                    if s.s_prox > tau_prox and s.s_sem > tau_sem
                ]
                tracks = [pool.prompt_tubelet, *accepted]
                frames = list(range(1, len(gt.lineage_masks)))
                report = tracking_scores(tracks, gt.lineage_masks, frames)
                js.append(report.J)
                ps.append(report.P)
                rs.append(report.R)
            rows.append(
                {
                    "tau_prox": tau_prox,
                    "tau_sem": tau_sem,
                    "J": sum(js) / len(js),
                    "P": sum(ps) / len(ps),
                    "R": sum(rs) / len(rs),
                }
            )
    return rows


def sweep_to_csv(rows: Sequence[dict], path: Path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["tau_prox", "tau_sem", "J", "P", "R"])
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    write_text(Path(path), buf.getvalue())
