"""Dataset evaluation and parameter sweeps.

A dataset is a directory of video directories, each holding frames, a
``meta.json`` with the frame rate, and the ground truth as
``truth.json`` (the layout :func:`tpivot.synth.generate_dataset`
writes). Every video is localized, scored against its truth, and
aggregated; a uniform-baseline row is always appended for comparison.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from sklearn.model_selection import ParameterGrid

from . import __version__
from .annotations import GroundTruthSegmentation, load_annotations
from .backends import VlmBackend
from .errors import TpivotError, ValidationError
from .localizer import TPivotLocalizer
from .metrics import f1, iou, mof, to_frame_labels
from .search import uniform_baseline
from .synth import TRUTH_FILENAME
from .video import META_FILENAME, ImageDirectorySource

log = logging.getLogger(__name__)

BackendFactory = Callable[[GroundTruthSegmentation], VlmBackend]


@dataclass
class EvalOptions:
    """Localizer knobs shared by every row of a sweep."""

    canvas_px: int = 2048
    iterations: int = 4
    shrink_factor: float = 2.0
    workers: int = 4
    retry_attempts: int = 3
    until_frame_level: bool = False
    split_segments: int = 1
    start_template: str | None = None
    end_template: str | None = None
    debug_dir: str | Path | None = None
    limit: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def discover_dataset(root: str | Path) -> list[Path]:
    """Find the video directories of a dataset, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise ValidationError(f"dataset root is not a directory: {root}")
    dirs = sorted(
        p for p in root.iterdir()
        if p.is_dir() and (p / TRUTH_FILENAME).exists()
        and (p / META_FILENAME).exists())
    if not dirs:
        raise ValidationError(
            f"no video directories with {TRUTH_FILENAME} and "
            f"{META_FILENAME} under {root}")
    return dirs


def score_transitions(transitions: Sequence[float],
                      truth: GroundTruthSegmentation) -> dict[str, float]:
    """Frame-level scores of predicted transitions against the truth."""
    n = len(truth.segments)
    pred = to_frame_labels(transitions, truth.duration_s, truth.fps, n)
    ref = to_frame_labels(truth.transitions, truth.duration_s, truth.fps, n)
    return {"mof": mof(pred, ref), "iou": iou(pred, ref), "f1": f1(pred, ref)}


def _mean_scores(entries: list[dict[str, Any]]) -> dict[str, float]:
    return {key: sum(e[key] for e in entries) / len(entries)
            for key in ("mof", "iou", "f1")}


def _groupings(per_video: list[dict[str, Any]]) -> dict[str, Any]:
    scored = [v for v in per_video if not v["failed"]]
    by_n_tasks: dict[str, Any] = {}
    for n in sorted({v["n_tasks"] for v in scored}):
        entries = [v for v in scored if v["n_tasks"] == n]
        by_n_tasks[str(n)] = {**_mean_scores(entries),
                              "n_videos": len(entries)}
    by_quartile: dict[str, Any] = {}
    if scored:
        ordered = sorted(scored, key=lambda v: (v["duration_s"],
                                                v["video_id"]))
        buckets: dict[int, list[dict[str, Any]]] = {}
        for rank, entry in enumerate(ordered):
            q = min(3, rank * 4 // len(ordered))
            buckets.setdefault(q, []).append(entry)
        for q in sorted(buckets):
            entries = buckets[q]
            by_quartile[f"q{q + 1}"] = {
                **_mean_scores(entries),
                "n_videos": len(entries),
                "max_duration_s": max(v["duration_s"] for v in entries),
            }
    return {"by_n_tasks": by_n_tasks, "by_duration_quartile": by_quartile}


def _load_pairs(root: str | Path,
                limit: int | None) -> list[tuple[Path, GroundTruthSegmentation]]:
    dirs = discover_dataset(root)
    if limit is not None:
        dirs = dirs[:limit]
    return [(d, load_annotations(d / TRUTH_FILENAME)) for d in dirs]


def _evaluate_pair(video_dir: Path, truth: GroundTruthSegmentation,
                   grid: str, style: str, backend_factory: BackendFactory,
                   options: EvalOptions) -> dict[str, Any]:
    entry: dict[str, Any] = {
        "video_id": truth.video_id,
        "n_tasks": len(truth.segments),
        "duration_s": truth.duration_s,
        "failed": False,
    }
    try:
        video = ImageDirectorySource(video_dir)
        localizer = TPivotLocalizer(
            backend=backend_factory(truth), grid=grid, style=style,
            canvas_px=options.canvas_px, iterations=options.iterations,
            shrink_factor=options.shrink_factor, workers=options.workers,
            retry_attempts=options.retry_attempts,
            until_frame_level=options.until_frame_level,
            split_segments=options.split_segments,
            start_template=options.start_template,
            end_template=options.end_template,
            debug_dir=options.debug_dir)
        record = localizer.predict(video, truth.task_labels)
        entry["transitions"] = record.transitions
        entry.update(score_transitions(record.transitions, truth))
    except TpivotError as exc:
        log.error("evaluation failed for %s: %s", truth.video_id, exc)
        entry["failed"] = True
        entry["error"] = str(exc)
    return entry


def _finish_row(grid: str, style: str,
                per_video: list[dict[str, Any]]) -> dict[str, Any]:
    scored = [v for v in per_video if not v["failed"]]
    row: dict[str, Any] = {
        "grid": grid,
        "style": style,
        "n_videos_scored": len(scored),
        "failed_videos": [v["video_id"] for v in per_video if v["failed"]],
        "per_video": per_video,
    }
    if scored:
        row["aggregate"] = _mean_scores(scored)
        row.update(_groupings(per_video))
    else:
        row["aggregate"] = None
    return row


def baseline_row(pairs: list[tuple[Path, GroundTruthSegmentation]]
                 ) -> dict[str, Any]:
    """Scores of the uniform split, labeled as its own sweep row."""
    per_video = []
    for _, truth in pairs:
        transitions = uniform_baseline(truth.duration_s, len(truth.segments))
        per_video.append({
            "video_id": truth.video_id,
            "n_tasks": len(truth.segments),
            "duration_s": truth.duration_s,
            "failed": False,
            "transitions": transitions,
            **score_transitions(transitions, truth),
        })
    return _finish_row("baseline", "-", per_video)


def sweep(dataset_root: str | Path, grids: Sequence[str],
          styles: Sequence[str], backend_factory: BackendFactory,
          options: EvalOptions | None = None) -> dict[str, Any]:
    """Evaluate every grid/style combination plus the uniform baseline."""
    options = options or EvalOptions()
    if not grids or not styles:
        raise ValidationError("need at least one grid and one style")
    pairs = _load_pairs(dataset_root, options.limit)
    rows = []
    for combo in ParameterGrid({"grid": list(grids), "style": list(styles)}):
        grid, style = combo["grid"], combo["style"]
        log.info("sweep row: grid=%s style=%s over %d videos",
                 grid, style, len(pairs))
        per_video = [
            _evaluate_pair(video_dir, truth, grid, style, backend_factory,
                           options)
            for video_dir, truth in pairs]
        rows.append(_finish_row(grid, style, per_video))
    rows.append(baseline_row(pairs))
    return {
        "dataset": str(dataset_root),
        "version": __version__,
        "n_videos": len(pairs),
        "rows": rows,
    }


def evaluate(dataset_root: str | Path, grid: str, style: str,
             backend_factory: BackendFactory,
             options: EvalOptions | None = None) -> dict[str, Any]:
    """Evaluate one configuration (plus baseline) over a dataset."""
    return sweep(dataset_root, [grid], [style], backend_factory, options)


def write_json(report: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_csv(report: dict[str, Any], path: str | Path) -> None:
    """One line per sweep row with the aggregate scores."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["grid", "style", "n_videos", "mof", "iou", "f1"])
        for row in report["rows"]:
            agg = row["aggregate"]
            if agg is None:
                writer.writerow([row["grid"], row["style"],
                                 row["n_videos_scored"], "", "", ""])
            else:
                writer.writerow([
                    row["grid"], row["style"], row["n_videos_scored"],
                    f"{agg['mof']:.4f}", f"{agg['iou']:.4f}",
                    f"{agg['f1']:.4f}"])
