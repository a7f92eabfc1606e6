"""clipexport CLI: export a clip to a replay bundle; verify bundles."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .export import ExportConfig, ExportError, export_bundle
from .rle import RleError
from .verify import verify_bundle


@click.group()
def main():
    """Record perception-model outputs for a clip into a replay bundle."""


@main.command()
@click.option("--frames", "frames_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="directory of image frames, ordered by filename")
@click.option("--prompt", "prompt_spec", required=True,
              help="rle:<W,H:runs> or file:<path to RLE text>")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--tau-coverage", type=float, default=0.25, show_default=True)
@click.option("--tau-remove", type=float, default=0.9, show_default=True)
@click.option("--min-area-fraction", type=float, default=1.0 / 625.0, show_default=True)
@click.option("--stride", type=int, default=1, show_default=True)
@click.option("--tau-prox", type=float, default=0.3, show_default=True)
@click.option("--tau-sem", type=float, default=0.7, show_default=True)
@click.option("--embed-stride", type=int, default=1, show_default=True)
@click.option("--dilate-r1", type=int, default=3, show_default=True)
@click.option("--dilate-r2", type=int, default=9, show_default=True)
@click.option("--superset", is_flag=True,
              help="also record tracks/embeds for every entity (sweep support)")
@click.option("--with-frames", is_flag=True, help="copy frames into the bundle")
def export(frames_dir, prompt_spec, out_dir, **opts):
    """Run the model suite over a clip and write a bundle."""
    kind, sep, arg = prompt_spec.partition(":")
    if kind == "file" and sep:
        prompt_path = Path(arg)
        if not prompt_path.is_file():
            click.echo(f"error: missing prompt file {arg}", err=True)
            sys.exit(2)
        prompt = prompt_path.read_text(encoding="utf-8").strip()
    elif kind == "rle" and sep:
        prompt = arg
    else:
        click.echo("error: prompt must be rle:<text> or file:<path>", err=True)
        sys.exit(2)
    cfg = ExportConfig(
        tau_coverage=opts["tau_coverage"],
        tau_remove=opts["tau_remove"],
        min_area_fraction=opts["min_area_fraction"],
        processing_stride=opts["stride"],
        tau_prox=opts["tau_prox"],
        tau_sem=opts["tau_sem"],
        embed_stride=opts["embed_stride"],
        dilate_r1=opts["dilate_r1"],
        dilate_r2=opts["dilate_r2"],
        superset=opts["superset"],
        with_frames=opts["with_frames"],
    )
    try:
        summary = export_bundle(frames_dir, prompt, out_dir, cfg)
    except (ExportError, RleError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    click.echo(
        "exported {num_frames} frames: {tracks} tracks, {embeds} embeds, "
        "{descriptions} descriptions, {errors} errors -> {out}".format(
            **summary, out=out_dir
        )
    )


@main.command()
@click.argument("bundle", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--dry-run-prompt", default=None,
              help="RLE text; replays the bundle through the consuming CLI")
@click.option("--seed", type=int, default=0, show_default=True)
def verify(bundle, dry_run_prompt, seed):
    """Check a bundle; exit 1 on any violation."""
    report = verify_bundle(bundle, dry_run_prompt=dry_run_prompt, dry_run_seed=seed)
    for message in report.warnings:
        click.echo(f"warning: {message}")
    for message in report.violations:
        click.echo(f"violation: {message}")
    status = "clean" if report.ok else f"{len(report.violations)} violations"
    if report.counts:
        click.echo(
            "checked {entities} entity records, {tracks} tracks, {embeds} embeds, "
            "{descriptions} descriptions: {status}".format(**report.counts, status=status)
        )
    else:
        click.echo(status)
    sys.exit(0 if report.ok else 1)


if __name__ == "__main__":
    main()
