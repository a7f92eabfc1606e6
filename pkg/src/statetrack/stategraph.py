"""Turn accepted candidate tracks into a transformation state graph.

Each accepted tubelet's emergence marks a state change at its start frame.
The describer sees the prompt contour on frame 0 and the post-set contours on
the emergence frame; its answer labels the edge and the involved nodes. A
describer failure never aborts graph construction - the edge survives with an
"unknown" description and a diagnostic flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .backend import Description, PerceptionBackend, Tubelet
from .errors import BackendError, ValidationError
from .maskcore import mask_hash

PROMPT_LABEL = "prompt object"
UNKNOWN_LABEL = "unknown"


@dataclass(frozen=True)
class StateChange:
    t: int
    pre_track_ids: tuple[str, ...]
    post_track_ids: tuple[str, ...]
    description: Description
    describe_failed: bool = False


@dataclass(frozen=True)
class GraphNode:
    node_id: str
    label: str
    start_frame: int


@dataclass(frozen=True)
class StateGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[StateChange, ...]


def detect_state_changes(valid: list[Tubelet]) -> list[tuple[int, str]]:
    """Emergence events (frame, tubelet id), ordered by frame then seed area then hash."""
    ordered = sorted(
        valid, key=lambda t: (t.start_frame, -t.seed_mask.area, mask_hash(t.seed_mask).hex)
    )
    return [(t.start_frame, t.id) for t in ordered]


def build_state_graph(
    prompt: Tubelet, valid: list[Tubelet], backend: PerceptionBackend
) -> StateGraph:
    by_id = {t.id: t for t in valid}
    events = detect_state_changes(valid)
    labels: dict[str, str] = {prompt.id: PROMPT_LABEL}
    labels.update({t.id: UNKNOWN_LABEL for t in valid})

    edges: list[StateChange] = []
    accepted: list[Tubelet] = []
    for s, tid in events:
        new = by_id[tid]
        pre_tracks = [prompt] + [t for t in accepted if t.start_frame < s]
        post_tracks = pre_tracks + [new]
        contour_tracks = []
        contours = []
        for track in post_tracks:
            m = track.mask_at(s)
            if m is not None and m.area > 0:
                contour_tracks.append(track)
                contours.append(m)
        failed = False
        try:
            desc = backend.describe(0, s, [prompt.mask_at(0)], contours)
        except BackendError:
            desc = Description("unknown", ())
            failed = True
        for idx, text in desc.objects:
            if 0 <= idx < len(contour_tracks):
                track = contour_tracks[idx]
                if track.id != prompt.id:
                    labels[track.id] = text
        edges.append(
            StateChange(
                t=s,
                pre_track_ids=tuple(t.id for t in pre_tracks),
                post_track_ids=tuple(t.id for t in post_tracks),
                description=desc,
                describe_failed=failed,
            )
        )
        accepted.append(new)

    nodes = [GraphNode(prompt.id, labels[prompt.id], prompt.start_frame)]
    for _, tid in events:
        nodes.append(GraphNode(tid, labels[tid], by_id[tid].start_frame))
    return StateGraph(tuple(nodes), tuple(edges))


def graph_to_json(graph: StateGraph) -> dict:
    edges = []
    for e in graph.edges:
        edge = {
            "t": e.t,
            "pre": list(e.pre_track_ids),
            "post": list(e.post_track_ids),
            "verb": e.description.action_verb,
            "objects": [[idx, text] for idx, text in e.description.objects],
        }
        if e.describe_failed:
            edge["describe_failed"] = True
        edges.append(edge)
    return {
        "nodes": [
            {"id": n.node_id, "label": n.label, "start_frame": n.start_frame}
            for n in graph.nodes
        ],
        "edges": edges,
    }


def serialize_graph(graph: StateGraph) -> str:
    """Deterministic text form; parse_graph() inverts it."""
    return json.dumps(graph_to_json(graph), sort_keys=True, indent=2) + "\n"


def graph_from_json(data: dict) -> StateGraph:
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise ValidationError("graph record must hold 'nodes' and 'edges'")
    try:
        nodes = tuple(
            GraphNode(str(n["id"]), str(n["label"]), int(n["start_frame"]))
            for n in data["nodes"]
        )
        edges = tuple(
            StateChange(
                t=int(e["t"]),
                pre_track_ids=tuple(str(i) for i in e["pre"]),
                post_track_ids=tuple(str(i) for i in e["post"]),
                description=Description(
                    str(e["verb"]),
                    tuple((int(i), str(text)) for i, text in e["objects"]),
                ),
                describe_failed=bool(e.get("describe_failed", False)),
            )
            for e in data["edges"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed graph record: {exc}") from exc
    node_ids = {n.node_id for n in nodes}
    for e in edges:
        for tid in (*e.pre_track_ids, *e.post_track_ids):
            if tid not in node_ids:
                raise ValidationError(f"graph edge references unknown node {tid!r}")
    return StateGraph(nodes, edges)


def parse_graph(text: str) -> StateGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"graph record is not valid JSON: {exc}") from exc
    return graph_from_json(data)


def format_adjacency(graph: StateGraph) -> str:
    """Human-readable listing used by the CLI."""
    lines = []
    for n in graph.nodes:
        lines.append(f"node {n.node_id}  [{n.label}]  starts at frame {n.start_frame}")
    for e in graph.edges:
        arrow = f"edge @frame {e.t}: {{{', '.join(e.pre_track_ids)}}} -> {{{', '.join(e.post_track_ids)}}}"
        lines.append(f"{arrow}  verb={e.description.action_verb!r}")
    return "\n".join(lines) + "\n"
