"""Validate a replay bundle: schema, RLE sums, hash consistency, candidates.

`verify_bundle` is static inspection; pass `dry_run_prompt` to additionally
replay the bundle through the consuming pipeline's CLI and report any
missing-record failure as an "incomplete" finding.
"""

from __future__ import annotations

import json
import math
import re
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .rle import RleError, mask_from_text, mask_sha

_ENTITY_RE = re.compile(r"^(\d{6})\.json$")
_KEYED_RE = re.compile(r"^(\d{6})_([0-9a-f]{64})\.json$")
_DESC_RE = re.compile(r"^(\d{6})_(\d{6})_([0-9a-f]{64})\.json$")


@dataclass
class VerifyReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def fail(self, message: str) -> None:
        self.violations.append(message)

    def warn(self, message: str) -> None:
        self.warnings.append(message)


def _load(path: Path, report: VerifyReport):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        report.fail(f"{path.name}: unreadable record: {exc}")
        return None


def _check_rle(text, width, height, where, report) -> str | None:
    if not isinstance(text, str):
        report.fail(f"{where}: mask is not RLE text")
        return None
    try:
        mask = mask_from_text(text)
    except RleError as exc:
        report.fail(f"{where}: {exc}")
        return None
    if mask.shape != (height, width):
        report.fail(f"{where}: mask is {mask.shape[1]}x{mask.shape[0]}, bundle is {width}x{height}")
        return None
    return mask_sha(mask)


def verify_bundle(
    bundle: Path,
    dry_run_prompt: str | None = None,
    dry_run_seed: int = 0,
    core_command: str = "statetrack",
) -> VerifyReport:
    bundle = Path(bundle)
    report = VerifyReport()
    meta_path = bundle / "meta.json"
    if not meta_path.is_file():
        report.fail("meta.json: missing")
        return report
    meta = _load(meta_path, report)
    if meta is None:
        return report
    for key in ("width", "height", "num_frames", "embed_dim", "format_version"):
        if not isinstance(meta.get(key), int):
            report.fail(f"meta.json: missing or non-integer field {key!r}")
    if report.violations:
        return report
    width, height = meta["width"], meta["height"]
    num_frames = meta["num_frames"]
    if meta["format_version"] != 1:
        report.fail(f"meta.json: unsupported format_version {meta['format_version']}")

    entity_hashes: dict[int, set[str]] = {}
    track_mask_hashes: dict[int, set[str]] = {}
    counts = {"entities": 0, "tracks": 0, "embeds": 0, "descriptions": 0}

    for path in sorted((bundle / "entities").glob("*.json")):
        m = _ENTITY_RE.match(path.name)
        if not m:
            report.fail(f"entities/{path.name}: bad record name")
            continue
        frame = int(m.group(1))
        if frame >= num_frames:
            report.fail(f"entities/{path.name}: frame beyond num_frames")
        data = _load(path, report)
        if not isinstance(data, list):
            if data is not None:
                report.fail(f"entities/{path.name}: record must be a list")
            continue
        hashes = set()
        for i, item in enumerate(data):
            if not isinstance(item, dict) or "rle" not in item:
                report.fail(f"entities/{path.name}[{i}]: missing 'rle'")
                continue
            digest = _check_rle(item["rle"], width, height, f"entities/{path.name}[{i}]", report)
            if digest:
                hashes.add(digest)
        entity_hashes[frame] = hashes
        counts["entities"] += 1

    for path in sorted((bundle / "tracks").glob("*.json")):
        m = _KEYED_RE.match(path.name)
        if not m:
            report.fail(f"tracks/{path.name}: bad record name")
            continue
        start = int(m.group(1))
        data = _load(path, report)
        if data is None:
            continue
        span = num_frames - start
        primary = data.get("primary")
        candidates = data.get("candidates")
        if not isinstance(primary, list) or len(primary) != span:
            report.fail(f"tracks/{path.name}: needs {span} primary masks")
            continue
        if not isinstance(candidates, list) or len(candidates) != span:
            report.fail(f"tracks/{path.name}: needs {span} candidate triples")
            continue
        for k, (rle, triple) in enumerate(zip(primary, candidates)):
            digest = _check_rle(rle, width, height, f"tracks/{path.name}.primary[{k}]", report)
            if digest:
                track_mask_hashes.setdefault(start + k, set()).add(digest)
            if not isinstance(triple, list) or len(triple) != 3:
                report.fail(f"tracks/{path.name}.candidates[{k}]: not a three-mask tuple")
                continue
            triple_digests = [
                _check_rle(t, width, height, f"tracks/{path.name}.candidates[{k}][{j}]", report)
                for j, t in enumerate(triple)
            ]
            if digest and digest not in triple_digests:
                report.fail(
                    f"tracks/{path.name}.candidates[{k}]: primary mask is not one of the candidates"
                )
        counts["tracks"] += 1

    for path in sorted((bundle / "embeds").glob("*.json")):
        m = _KEYED_RE.match(path.name)
        if not m:
            report.fail(f"embeds/{path.name}: bad record name")
            continue
        frame = int(m.group(1))
        data = _load(path, report)
        if data is None:
            continue
        v = data.get("v")
        if not isinstance(v, list) or len(v) != meta["embed_dim"]:
            report.fail(f"embeds/{path.name}: needs {meta['embed_dim']} floats")
            continue
        if not all(isinstance(x, (int, float)) and math.isfinite(x) for x in v):
            report.fail(f"embeds/{path.name}: non-finite values")
            continue
        norm = math.sqrt(sum(float(x) * float(x) for x in v))
        if abs(norm - 1.0) > 1e-6:
            report.fail(f"embeds/{path.name}: norm {norm} is not 1 within 1e-6")
        known = entity_hashes.get(frame, set()) | track_mask_hashes.get(frame, set())
        if m.group(2) not in known:
            report.warn(
                f"embeds/{path.name}: key hash matches no recorded entity or track mask at frame {frame}"
            )
        counts["embeds"] += 1

    for path in sorted((bundle / "descriptions").glob("*.json")):
        m = _DESC_RE.match(path.name)
        if not m:
            report.fail(f"descriptions/{path.name}: bad record name")
            continue
        data = _load(path, report)
        if data is None:
            continue
        if not isinstance(data.get("action_verb"), str) or not data["action_verb"]:
            report.fail(f"descriptions/{path.name}: missing action_verb")
        objects = data.get("objects")
        if not isinstance(objects, list) or not all(
            isinstance(o, list) and len(o) == 2 and isinstance(o[0], int) and isinstance(o[1], str)
            for o in objects
        ):
            report.fail(f"descriptions/{path.name}: objects must be [index, text] pairs")
        counts["descriptions"] += 1

    report.counts = counts
    if dry_run_prompt is not None:
        _dry_run(bundle, dry_run_prompt, dry_run_seed, core_command, report)
    return report


_CONFIG_FLAGS = {
    "tau_coverage": "--tau-coverage",
    "tau_remove": "--tau-remove",
    "min_area_fraction": "--min-area-fraction",
    "processing_stride": "--stride",
    "tau_prox": "--tau-prox",
    "tau_sem": "--tau-sem",
    "embed_stride": "--embed-stride",
}


def _config_flags(bundle: Path) -> list[str]:
    """CLI flags matching the configuration the bundle was exported under."""
    try:
        meta = json.loads((bundle / "meta.json").read_text(encoding="utf-8"))
        config = meta.get("extras", {}).get("config", {})
    except (OSError, json.JSONDecodeError):
        return []
    flags = []
    for key, flag in _CONFIG_FLAGS.items():
        if key in config:
            flags += [flag, str(config[key])]
    return flags


def _dry_run(bundle, prompt, seed, core_command, report) -> None:
    """Replay the bundle through the consuming pipeline; report missing keys."""
    if shutil.which(core_command) is None:
        candidate = [sys.executable, "-m", "statetrack"]
    else:
        candidate = [core_command]
    with tempfile.TemporaryDirectory() as tmp:
        proc = subprocess.run(
            [
                *candidate,
                "run",
                "--backend",
                f"replay:{bundle}",
                "--prompt",
                f"rle:{prompt}",
                "--seed",
                str(seed),
                "--out",
                str(Path(tmp) / "run"),
                *_config_flags(bundle),
            ],
            capture_output=True,
            text=True,
        )
    if proc.returncode == 3:
        report.fail(f"incomplete: dry-run missing record: {proc.stderr.strip()}")
    elif proc.returncode != 0:
        report.fail(f"dry-run failed (exit {proc.returncode}): {proc.stderr.strip()}")
