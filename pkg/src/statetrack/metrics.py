"""Tracking metrics and the transformation-graph evaluation harness.

Tracking: mean region IoU over evaluated frames (J), the same over the last
quarter of them (J_tr), and micro-averaged pixel precision/recall. Graph
quality: bipartite matching of predicted change times against annotated
intervals (T_P / T_R), verb and object description accuracy on the matched
items (A_V / A_O), and the combined recalls - H_ST needs every annotated
resulting object spatially matched, H additionally needs the descriptions
judged correct.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .backend import Tubelet
from .errors import ValidationError
from .judges import Judge, RuleBasedJudge, judge_object, judge_verb  # noqa: F401
from .maskcore import (
    BinaryMask,
    intersection_area,
    iou,
    mask_from_text,
    mask_to_text,
    union_all,
)
from .stategraph import StateGraph

# annotation data model


@dataclass(frozen=True)
class TasObject:
    mask: BinaryMask
    text: str


@dataclass(frozen=True)
class TasTransformation:
    t_s: int
    t_e: int
    verb: str
    objects: tuple[TasObject, ...]


@dataclass(frozen=True)
class TasAnnotation:
    t_start: int
    t_end: int
    transformations: tuple[TasTransformation, ...]

    def __post_init__(self):
        if self.t_start < 0 or self.t_start > self.t_end:
            raise ValidationError("annotation requires 0 <= t_start <= t_end")
        for i, tr in enumerate(self.transformations):
            if not self.t_start <= tr.t_s <= tr.t_e <= self.t_end:
                raise ValidationError(
                    f"transformation {i}: interval [{tr.t_s}, {tr.t_e}] outside "
                    f"[{self.t_start}, {self.t_end}]"
                )
            if not tr.objects:
                raise ValidationError(f"transformation {i}: resulting objects must be nonempty")
            if not tr.verb:
                raise ValidationError(f"transformation {i}: verb must be nonempty")


def tas_to_json(annotation: TasAnnotation) -> dict:
    return {
        "t_start": annotation.t_start,
        "t_end": annotation.t_end,
        "transformations": [
            {
                "t_s": tr.t_s,
                "t_e": tr.t_e,
                "verb": tr.verb,
                "objects": [{"rle": mask_to_text(o.mask), "text": o.text} for o in tr.objects],
            }
            for tr in annotation.transformations
        ],
    }


def tas_from_json(data: dict) -> TasAnnotation:
    try:
        transformations = tuple(
            TasTransformation(
                t_s=int(tr["t_s"]),
                t_e=int(tr["t_e"]),
                verb=str(tr["verb"]),
                objects=tuple(
                    TasObject(mask_from_text(o["rle"]), str(o["text"])) for o in tr["objects"]
                ),
            )
            for tr in data["transformations"]
        )
        return TasAnnotation(int(data["t_start"]), int(data["t_end"]), transformations)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed annotation record: {exc}") from exc


# tracking metrics


@dataclass(frozen=True)
class TrackingReport:
    J: float
    J_tr: float
    P: float
    R: float
    per_frame_iou: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "J": self.J,
            "J_tr": self.J_tr,
            "P": self.P,
            "R": self.R,
            "per_frame_iou": list(self.per_frame_iou),
        }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 1.0


def tracking_scores(
    pred_tracks: Sequence[Tubelet],
    gt_masks: Sequence[BinaryMask],
    eval_frames: Sequence[int],
    empty_frame_iou: float | None = 1.0,
) -> TrackingReport:
    """Score the union of the predicted tracks against per-frame ground truth.

    Frames where both sides are empty score `empty_frame_iou` (pass None to
    drop them from the means instead). Precision/recall are micro-averaged
    over pixels with 0/0 counted as 0.
    """
    if not eval_frames:
        raise ValueError("eval_frames must be nonempty")
    frames = sorted(eval_frames)
    if frames[0] <= 0 or frames[-1] >= len(gt_masks):
        raise ValueError("eval_frames must lie in [1, num_frames)")
    size = gt_masks[frames[0]].size
    per_frame: list[float] = []
    counted: list[float | None] = []
    inter_sum = pred_sum = gt_sum = 0
    for t in frames:
        gt = gt_masks[t]
        pred = union_all(
            (m for m in (tr.mask_at(t) for tr in pred_tracks) if m is not None), size
        )
        value = iou(pred, gt)
        per_frame.append(value)
        if gt.area == 0 and pred.area == 0:
            counted.append(empty_frame_iou)
        else:
            counted.append(value)
        inter_sum += intersection_area(pred, gt)
        pred_sum += pred.area
        gt_sum += gt.area
    n_tr = -(-len(frames) // 4)  # ceil of 25%
    j = _mean([v for v in counted if v is not None])
    j_tr = _mean([v for v in counted[-n_tr:] if v is not None])
    p = inter_sum / pred_sum if pred_sum else 0.0
    r = inter_sum / gt_sum if gt_sum else 0.0
    return TrackingReport(j, j_tr, p, r, tuple(per_frame))


# assignment


def _lsap_total(cost: np.ndarray) -> float:
    rows, cols = linear_sum_assignment(cost)
    return math.fsum(float(cost[r, c]) for r, c in zip(rows, cols))


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment on the smaller side of a rectangular matrix.

    Among all optimal assignments, returns the one whose (row, col) pair
    sequence (rows ascending) is lexicographically smallest, so ties break
    deterministically.
    """
    c = np.asarray(cost, dtype=float)
    if c.size == 0:
        return []
    if c.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    n_rows, n_cols = c.shape
    k = min(n_rows, n_cols)
    pairs: list[tuple[int, int]] = []
    chosen: list[float] = []
    used_cols: set[int] = set()
    next_row = 0
    for step in range(k):
        need = k - step - 1
        best: tuple[float, int, int] | None = None
        for r in range(next_row, n_rows):
            if n_rows - 1 - r < need:
                break
            for col in range(n_cols):
                if col in used_cols:
                    continue
                entries = chosen + [float(c[r, col])]
                if need:
                    rest_cols = [j for j in range(n_cols) if j not in used_cols and j != col]
                    sub = c[np.ix_(range(r + 1, n_rows), rest_cols)]
                    entries.append(_lsap_total(sub))
                total = math.fsum(entries)
                if best is None or total < best[0]:
                    best = (total, r, col)
        _, r, col = best
        pairs.append((r, col))
        chosen.append(float(c[r, col]))
        used_cols.add(col)
        next_row = r + 1
    return pairs


def temporal_match(
    pred_times: Sequence[int], gt_intervals: Sequence[tuple[int, int]]
) -> tuple[int, int, int, list[tuple[int, int]]]:
    """Zero/one matching of predicted change times against annotated intervals.

    Returns (TP, FP, FN, matched (gt_index, pred_index) pairs); only zero-cost
    matches count.
    """
    n_g, n_p = len(gt_intervals), len(pred_times)
    if n_g == 0 or n_p == 0:
        return 0, n_p, n_g, []
    c = np.ones((n_g, n_p))
    for i, (t_s, t_e) in enumerate(gt_intervals):
        for j, t in enumerate(pred_times):
            if t_s <= t <= t_e:
                c[i, j] = 0.0
    matched = [(i, j) for i, j in hungarian(c) if c[i, j] == 0.0]
    tp = len(matched)
    return tp, n_p - tp, n_g - tp, matched


def object_match(
    pred_masks: Sequence[BinaryMask],
    gt_masks: Sequence[BinaryMask],
    iou_threshold: float = 0.5,
) -> list[tuple[int, int, float]]:
    """Assignment maximizing total IoU; keeps (gt, pred, iou) pairs above threshold."""
    if not pred_masks or not gt_masks:
        return []
    matrix = np.empty((len(gt_masks), len(pred_masks)))
    for i, g in enumerate(gt_masks):
        for j, p in enumerate(pred_masks):
            matrix[i, j] = iou(g, p)
    pairs = hungarian(1.0 - matrix)
    return [(i, j, float(matrix[i, j])) for i, j in pairs if matrix[i, j] > iou_threshold]


# combined evaluation


@dataclass(frozen=True)
class TasCounts:
    tp: int
    fp: int
    fn: int
    verbs_judged: int
    verbs_correct: int
    object_pairs: int
    objects_correct: int
    n_gt: int
    n_pred: int


@dataclass(frozen=True)
class TasReport:
    T_P: float
    T_R: float
    A_V: float
    A_O: float
    H_ST: float
    H: float
    counts: TasCounts
    transformations: tuple[dict, ...]
    judge_diagnostics: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "T_P": self.T_P,
            "T_R": self.T_R,
            "A_V": self.A_V,
            "A_O": self.A_O,
            "H_ST": self.H_ST,
            "H": self.H,
            "counts": asdict(self.counts),
            "transformations": list(self.transformations),
            "judge_diagnostics": list(self.judge_diagnostics),
        }


def evaluate_tas(
    pred_graph: StateGraph,
    pred_tracks: Mapping[str, Tubelet] | Sequence[Tubelet],
    annotation: TasAnnotation,
    judge: Judge | None = None,
    iou_threshold: float = 0.5,
) -> TasReport:
    """Full evaluation of a predicted state graph against an annotation.

    Predicted change times are the graph's edge times inside the annotation
    window; the resulting-object masks of a matched edge are the post-set
    tracks' primary masks at the annotated end frame.
    """
    judge = judge or RuleBasedJudge()
    if isinstance(pred_tracks, Mapping):
        tracks = dict(pred_tracks)
    else:
        tracks = {t.id: t for t in pred_tracks}
    labels = {n.node_id: n.label for n in pred_graph.nodes}

    edges = [e for e in pred_graph.edges if annotation.t_start <= e.t <= annotation.t_end]
    intervals = [(tr.t_s, tr.t_e) for tr in annotation.transformations]
    tp, fp, fn, matched = temporal_match([e.t for e in edges], intervals)
    matched_by_gt = dict(matched)

    n_g = len(annotation.transformations)
    verbs_judged = verbs_correct = 0
    object_pairs = objects_correct = 0
    st_count = full_count = 0
    diagnostics: list[dict] = []

    for i, tr in enumerate(annotation.transformations):
        j = matched_by_gt.get(i)
        diag: dict = {
            "gt_index": i,
            "verb": tr.verb,
            "t_s": tr.t_s,
            "t_e": tr.t_e,
            "matched": j is not None,
        }
        if j is None:
            diag.update(spatiotemporal=False, full=False)
            diagnostics.append(diag)
            continue
        edge = edges[j]
        diag["pred_time"] = edge.t
        verb_score = judge_verb(judge, tr.verb, edge.description.action_verb)
        verbs_judged += 1
        verbs_correct += int(verb_score == 1)

        pred_items: list[tuple[str, BinaryMask]] = []
        for tid in edge.post_track_ids:
            tub = tracks.get(tid)
            if tub is None:
                raise ValidationError(f"graph references track {tid!r} missing from prediction")
            m = tub.mask_at(tr.t_e)
            if m is not None and m.area > 0:
                pred_items.append((tid, m))
        pairs = object_match(
            [m for _, m in pred_items], [o.mask for o in tr.objects], iou_threshold
        )
        scores = []
        for gt_idx, pred_idx, pair_iou in pairs:
            tid = pred_items[pred_idx][0]
            label = labels.get(tid)
            if label is None:
                raise ValidationError(f"graph has no node for track {tid!r}")
            scores.append(judge_object(judge, tr.objects[gt_idx].text, label))
        object_pairs += len(pairs)
        objects_correct += sum(1 for s in scores if s == 1)

        spatial_ok = len(pairs) == len(tr.objects)
        full_ok = spatial_ok and verb_score == 1 and all(s == 1 for s in scores)
        st_count += int(spatial_ok)
        full_count += int(full_ok)
        diag.update(
            verb_score=verb_score,
            objects_matched=len(pairs),
            objects_total=len(tr.objects),
            object_scores=scores,
            spatiotemporal=spatial_ok,
            full=full_ok,
        )
        diagnostics.append(diag)

    counts = TasCounts(
        tp=tp,
        fp=fp,
        fn=fn,
        verbs_judged=verbs_judged,
        verbs_correct=verbs_correct,
        object_pairs=object_pairs,
        objects_correct=objects_correct,
        n_gt=n_g,
        n_pred=len(edges),
    )
    return TasReport(
        T_P=tp / (tp + fp) if tp + fp else 0.0,
        T_R=tp / (tp + fn) if tp + fn else 0.0,
        A_V=verbs_correct / verbs_judged if verbs_judged else 1.0,
        A_O=objects_correct / object_pairs if object_pairs else 1.0,
        H_ST=st_count / n_g if n_g else 0.0,
        H=full_count / n_g if n_g else 0.0,
        counts=counts,
        transformations=tuple(diagnostics),
        judge_diagnostics=tuple(getattr(judge, "diagnostics", ())),
    )
