"""Estimator-style facade over the boundary search.

:class:`TPivotLocalizer` bundles every knob of a localization run into
one object with the familiar ``fit`` / ``predict`` / ``get_params``
surface. There is nothing to fit (the method is training-free), so
``fit`` only validates and returns ``self``; it exists so the object
composes with parameter-grid tooling and reads like its neighbors in a
pipeline.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import Sequence

from sklearn.base import BaseEstimator

from . import __version__
from .annotations import BoundaryResult, LocalizationRecord, Segment
from .backends import VlmBackend
from .errors import ConfigError, ValidationError
from .grid import parse_grid, spec_for_style
from .search import (
    BoundaryEstimate,
    SearchParams,
    estimate_transitions,
    localize_tasks_parallel,
    repair_starts,
)
from .video import VideoSource, open_video


def transitions_to_segments(tasks: Sequence[str], transitions: Sequence[float],
                            duration_s: float) -> list[Segment]:
    """Cut the video at the transition times, one segment per task."""
    bounds = [0.0, *transitions, duration_s]
    return [Segment(label, bounds[i], bounds[i + 1])
            for i, label in enumerate(tasks)]


class TPivotLocalizer(BaseEstimator):
    """Locates the time span of each described task in a video.

    Parameters
    ----------
    backend:
        The :class:`~tpivot.backends.VlmBackend` answering queries.
    grid:
        Grid size as ``"RxC"``; the product is the frames per query.
    style:
        Annotation style preset: original, center, or spacing.
    canvas_px:
        Longest side of the composed grid image in pixels.
    iterations:
        Window halvings after the initial whole-video pass.
    shrink_factor:
        Window width divisor between passes.
    workers:
        Concurrent boundary searches.
    retry_attempts:
        Re-asks per query before falling back to the center frame.
    until_frame_level:
        Keep shrinking until the window spans a single frame.
    split_segments:
        Pre-divide each search window into this many sub-windows.
    fps:
        Frame-rate override when opening image-directory videos.
    start_template / end_template:
        Prompt template overrides; must keep the ``{task_sequence}``
        and ``{task_focus}`` placeholders.
    debug_dir:
        When set, every composed grid is dumped there as PNG + JSON.
    """

    def __init__(self, backend: VlmBackend | None = None, grid: str = "5x5",
                 style: str = "original", canvas_px: int = 2048,
                 iterations: int = 4, shrink_factor: float = 2.0,
                 workers: int = 4, retry_attempts: int = 3,
                 until_frame_level: bool = False, split_segments: int = 1,
                 fps: float | None = None,
                 start_template: str | None = None,
                 end_template: str | None = None,
                 debug_dir: str | Path | None = None):
        self.backend = backend
        self.grid = grid
        self.style = style
        self.canvas_px = canvas_px
        self.iterations = iterations
        self.shrink_factor = shrink_factor
        self.workers = workers
        self.retry_attempts = retry_attempts
        self.until_frame_level = until_frame_level
        self.split_segments = split_segments
        self.fps = fps
        self.start_template = start_template
        self.end_template = end_template
        self.debug_dir = debug_dir

    def fit(self, X=None, y=None) -> "TPivotLocalizer":
        """No-op: the method is training-free. Validates parameters."""
        self.search_params()
        return self

    def search_params(self) -> SearchParams:
        rows, cols = parse_grid(self.grid)
        spec = spec_for_style(rows, cols, self.style, self.canvas_px)
        return SearchParams(
            grid=spec,
            iterations=self.iterations,
            shrink_factor=self.shrink_factor,
            retry_attempts=self.retry_attempts,
            until_frame_level=self.until_frame_level,
            start_template=self.start_template,
            end_template=self.end_template,
        )

    def predict(self, video: VideoSource | str | Path,
                tasks: Sequence[str]) -> LocalizationRecord:
        """Localize every task and return the full result record."""
        if self.backend is None:
            raise ConfigError("no backend configured on the localizer")
        if not tasks:
            raise ValidationError("task list is empty")
        tasks = [str(t) for t in tasks]
        if not isinstance(video, VideoSource):
            video = open_video(video, fps=self.fps)
        params = self.search_params()
        started = time.monotonic()
        starts, ends = localize_tasks_parallel(
            video, tasks, params, self.backend, max_workers=self.workers,
            debug_dir=self.debug_dir, n_splits=self.split_segments)
        elapsed = time.monotonic() - started
        return self._assemble(video, tasks, starts, ends, elapsed)

    def _assemble(self, video: VideoSource, tasks: list[str],
                  starts: list[BoundaryEstimate], ends: list[BoundaryEstimate],
                  elapsed_s: float) -> LocalizationRecord:
        duration = video.duration_s
        transitions = estimate_transitions(
            [e.time_s for e in starts], [e.time_s for e in ends])
        # The pairwise end/start repairs can still leave the merged
        # midpoints non-monotone; the published transitions must order,
        # so push each onto the running maximum and clamp to the video.
        monotone = [min(max(t, 0.0), duration)
                    for t in repair_starts(transitions)]
        boundaries = [
            BoundaryResult(
                label=tasks[k],
                start_s=starts[k].time_s,
                end_s=ends[k].time_s,
                start_fallback=starts[k].failed,
                end_fallback=ends[k].failed,
            )
            for k in range(len(tasks))]
        meta = {
            "version": __version__,
            "backend": self.backend.name,
            "params": {k: v for k, v in self.get_params().items()
                       if k not in ("backend", "debug_dir")},
            "searches": [
                {
                    "task_index": est.task_index,
                    "boundary": est.boundary,
                    "time_s": est.time_s,
                    "degenerate": est.degenerate,
                    "failed": est.failed,
                    **({"error": est.error} if est.error else {}),
                    **({"split_index": est.split_index}
                       if est.split_index is not None else {}),
                    "trace": [p.to_dict() for p in est.trace],
                }
                for est in [*starts, *ends]],
        }
        if not self.backend.deterministic:
            meta["wall_clock_s"] = round(elapsed_s, 3)
        return LocalizationRecord(
            video_id=video.video_id,
            fps=video.fps,
            duration_s=duration,
            tasks=tasks,
            boundaries=boundaries,
            transitions=monotone,
            segments=transitions_to_segments(tasks, monotone, duration),
            meta=meta,
        )
