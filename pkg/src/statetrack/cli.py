"""Command-line surface: run, simulate, evaluate, sweep.

Exit codes: 0 success, 2 validation error, 3 incomplete replay bundle, 4 I/O.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .backend.scenarios import FAMILIES, make_family_scene
from .backend.simulator import load_scenario
from .errors import BundleIncompleteError, StateTrackError, ValidationError
from .judges import make_judge
from .partition import PartitionConfig
from .pipeline import (
    RunConfig,
    evaluate_run,
    run_pipeline,
    simulate_bundle,
    sweep_grid,
    sweep_to_csv,
)
from .reasoning import ReasoningConfig
from .stategraph import format_adjacency

EXIT_VALIDATION = 2
EXIT_INCOMPLETE = 3
EXIT_IO = 4


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BundleIncompleteError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INCOMPLETE)
        except (ValidationError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except StateTrackError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


def _partition_options(fn):
    fn = click.option("--tau-coverage", type=float, default=0.25, show_default=True)(fn)
    fn = click.option("--tau-remove", type=float, default=0.9, show_default=True)(fn)
    fn = click.option(
        "--min-area-fraction", type=float, default=1.0 / 625.0, show_default=True
    )(fn)
    fn = click.option("--stride", type=int, default=1, show_default=True,
                      help="process every n-th frame when seeding new tracks")(fn)
    return fn


def _reasoning_options(fn):
    fn = click.option("--tau-prox", type=float, default=0.3, show_default=True)(fn)
    fn = click.option("--tau-sem", type=float, default=0.7, show_default=True)(fn)
    fn = click.option("--embed-stride", type=int, default=1, show_default=True)(fn)
    fn = click.option("--no-proximity", is_flag=True, help="drop the proximity constraint")(fn)
    fn = click.option("--no-semantic", is_flag=True, help="drop the semantic constraint")(fn)
    fn = click.option(
        "--accept-all-candidates", is_flag=True, help="accept every late-emergent track"
    )(fn)
    return fn


def _build_configs(opts) -> tuple[PartitionConfig, ReasoningConfig]:
    partition = PartitionConfig(
        tau_coverage=opts["tau_coverage"],
        tau_remove=opts["tau_remove"],
        min_area_fraction=opts["min_area_fraction"],
        processing_stride=opts["stride"],
    )
    reasoning = ReasoningConfig(
        tau_prox=opts["tau_prox"],
        tau_sem=opts["tau_sem"],
        embed_stride=opts["embed_stride"],
        use_proximity=not opts["no_proximity"],
        use_semantic=not opts["no_semantic"],
        accept_all=opts["accept_all_candidates"],
    )
    return partition, reasoning


@click.group()
def main():
    """State-change-aware object tracking pipeline."""


@main.command()
@click.option("--backend", "backend_spec", required=True,
              help="simulate:<scenario.json> or replay:<bundle dir>")
@click.option("--prompt", "prompt_spec", required=True,
              help="object:<id>, rle:<W,H:runs> or file:<path>")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-partition", is_flag=True,
              help="baseline: track the prompt only, no partition or recovery")
@click.option("--print-graph", is_flag=True, help="print the adjacency listing")
@_partition_options
@_reasoning_options
@guarded
def run(backend_spec, prompt_spec, out_dir, seed, no_partition, print_graph, **opts):
    """Run the full pipeline and write all artifacts."""
    partition, reasoning = _build_configs(opts)
    cfg = RunConfig(
        backend_spec=backend_spec,
        prompt_spec=prompt_spec,
        out_dir=out_dir,
        seed=seed,
        partition=partition,
        reasoning=reasoning,
        no_partition=no_partition,
    )
    output = run_pipeline(cfg)
    if print_graph:
        click.echo(format_adjacency(output.graph), nl=False)
    click.echo(
        f"tracks: {len(output.tracks)}  state changes: {len(output.graph.edges)}  -> {out_dir}"
    )


@main.command()
@click.option("--scenario", type=click.Path(exists=True, path_type=Path),
              help="scenario JSON file")
@click.option("--family", type=click.Choice(sorted(FAMILIES)), help="built-in scenario family")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@_partition_options
@_reasoning_options
@guarded
def simulate(scenario, family, seed, out_dir, **opts):
    """Render a scenario: replay bundle + ground truth + a reference run."""
    if (scenario is None) == (family is None):
        raise ValidationError("pass exactly one of --scenario or --family")
    scn = load_scenario(scenario) if scenario is not None else make_family_scene(family, seed)
    partition, reasoning = _build_configs(opts)
    output = simulate_bundle(scn, seed, out_dir, partition=partition, reasoning=reasoning)
    click.echo(
        f"bundle: {out_dir / 'bundle'}  tracks: {len(output.tracks)}  "
        f"state changes: {len(output.graph.edges)}"
    )


@main.command()
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, path_type=Path),
              help="output directory of a run")
@click.option("--truth", "truth_dir", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="directory holding gt_masks.json and tas.json")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None)
@click.option("--judge", "judge_spec", type=click.Choice(["rule_based", "external"]),
              default="rule_based", show_default=True)
@click.option("--skip-empty-frames", is_flag=True,
              help="drop frames where prediction and truth are both empty")
@guarded
def evaluate(pred_dir, truth_dir, out_path, judge_spec, skip_empty_frames):
    """Score a prediction directory against ground truth."""
    judge = make_judge(judge_spec)
    tracking, tas = evaluate_run(
        pred_dir,
        truth_dir,
        judge=judge,
        out_path=out_path or pred_dir / "report.json",
        empty_frame_iou=None if skip_empty_frames else 1.0,
    )
    rows = [
        ("J", tracking.J), ("J_tr", tracking.J_tr), ("P", tracking.P), ("R", tracking.R),
        ("T_P", tas.T_P), ("T_R", tas.T_R), ("A_V", tas.A_V), ("A_O", tas.A_O),
        ("H_ST", tas.H_ST), ("H", tas.H),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        click.echo(f"{name:<{width}}  {value:.4f}")


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad threshold list {text!r}") from exc
    if not values:
        raise ValidationError(f"bad threshold list {text!r}")
    return values


@main.command()
@click.option("--scenes", "scenes_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="directory of scenario JSON files")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_csv", required=True, type=click.Path(path_type=Path))
@click.option("--tau-prox", "taus_prox", default="0.1,0.2,0.3,0.4,0.5", show_default=True)
@click.option("--tau-sem", "taus_sem", default="0.5,0.6,0.7,0.8,0.9", show_default=True)
@click.option("--embed-stride", type=int, default=1, show_default=True)
@guarded
def sweep(scenes_dir, seed, out_csv, taus_prox, taus_sem, embed_stride):
    """Grid over the filter thresholds; writes one CSV row per cell."""
    paths = sorted(Path(scenes_dir).glob("*.json"))
    if not paths:
        raise ValidationError(f"no scenario files in {scenes_dir}")
    scenarios = [(p.stem, load_scenario(p)) for p in paths]
    rows = sweep_grid(
        scenarios, seed, _parse_grid(taus_prox), _parse_grid(taus_sem),
        embed_stride=embed_stride,
    )
    sweep_to_csv(rows, out_csv)
    click.echo(f"{len(rows)} grid cells over {len(scenarios)} scenes -> {out_csv}")


if __name__ == "__main__":
    main()
