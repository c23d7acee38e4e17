"""Iterative coarse-to-fine search for task boundaries.

One boundary (the start or end of one task) is located by repeatedly
showing the model a grid of frames sampled from a time window, asking
it to pick the frame closest to the boundary, recentering the window on
the picked frame's timestamp, and shrinking the window. The first pass
covers the whole video; each later pass divides the window width by the
shrink factor, so after the default four refinements the window is a
sixteenth of the video and the answer is pinned to within a fraction of
that.

Starts for all tasks are searched in parallel over the full video; ends
are then searched over ``[start_k, duration]`` so an end can never
precede its own start. Individual boundary failures fall back to the
uniform-baseline position instead of aborting the run.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from PIL import Image

from .backends import QueryContext, VlmBackend
from .errors import (
    AnswerParseError,
    DegenerateWindowError,
    EmptyAnswerError,
    TpivotError,
    ValidationError,
)
from .grid import FrameGrid, GridSpec, compose_grid, render_debug
from .prompts import build_prompt, parse_answer
from .video import VideoSource

log = logging.getLogger(__name__)

MAX_ITERATIONS = 16
# Safety cap on total passes when running until frame-level resolution.
_MAX_PASSES = 64


@dataclass(frozen=True)
class TimeWindow:
    """A sampling window: center and width, clamped to the video."""

    center_s: float
    width_s: float
    duration_s: float

    def __post_init__(self):
        if self.width_s <= 0:
            raise ValidationError(f"window width must be positive, "
                                  f"got {self.width_s}")
        if self.duration_s <= 0:
            raise ValidationError(f"duration must be positive, "
                                  f"got {self.duration_s}")
        if not (0.0 <= self.center_s <= self.duration_s):
            raise ValidationError(
                f"window center {self.center_s} outside "
                f"[0, {self.duration_s}]")

    def effective_range(self) -> tuple[float, float]:
        lo = max(0.0, self.center_s - self.width_s / 2)
        hi = min(self.duration_s, self.center_s + self.width_s / 2)
        return lo, hi


@dataclass(frozen=True)
class SearchParams:
    """Knobs of one boundary search."""

    grid: GridSpec
    iterations: int = 4
    shrink_factor: float = 2.0
    retry_attempts: int = 3
    until_frame_level: bool = False
    start_template: str | None = None
    end_template: str | None = None

    def __post_init__(self):
        if not (1 <= self.iterations <= MAX_ITERATIONS):
            raise ValidationError(
                f"iterations must be in 1..{MAX_ITERATIONS}, "
                f"got {self.iterations}")
        if self.shrink_factor <= 1.0:
            raise ValidationError(
                f"shrink_factor must exceed 1, got {self.shrink_factor}")
        if self.grid.n_cells < 4:
            raise ValidationError(
                f"grid needs at least 4 cells, got {self.grid.n_cells}")
        if self.retry_attempts < 0:
            raise ValidationError(
                f"retry_attempts must be >= 0, got {self.retry_attempts}")


def sample_indices(lo_i: int, hi_i: int, n: int) -> list[int]:
    """Pick up to ``n`` strictly increasing frame indices in [lo_i, hi_i].

    Indices are spread evenly with both endpoints included. When the
    range holds ``n`` or fewer frames, every frame in it is returned.
    Rounding collisions are resolved by nudging indices apart, never
    outside the range.
    """
    if hi_i < lo_i:
        raise ValidationError(f"empty index range [{lo_i}, {hi_i}]")
    if n < 2:
        raise ValidationError(f"need at least 2 samples, got {n}")
    span = hi_i - lo_i + 1
    if span <= n:
        return list(range(lo_i, hi_i + 1))
    idx = [lo_i + round(k * (hi_i - lo_i) / (n - 1)) for k in range(n)]
    for i in range(1, n):
        if idx[i] <= idx[i - 1]:
            idx[i] = idx[i - 1] + 1
    if idx[-1] > hi_i:
        idx[-1] = hi_i
        for i in range(n - 2, -1, -1):
            if idx[i] >= idx[i + 1]:
                idx[i] = idx[i + 1] - 1
    return idx


def sample_frames(video: VideoSource, window: TimeWindow,
                  n: int) -> list[tuple[Image.Image, float]]:
    """Decode up to ``n`` evenly spaced frames from the window.

    Raises :class:`DegenerateWindowError` when the effective range
    collapses onto a single frame, which is the search's signal that
    frame-level resolution has been reached.
    """
    lo, hi = window.effective_range()
    lo_i = video.nearest_frame_index(lo)
    hi_i = video.nearest_frame_index(min(hi, video.duration_s))
    if hi_i <= lo_i:
        raise DegenerateWindowError(
            f"window [{lo:.3f}, {hi:.3f}]s spans a single frame")
    indices = sample_indices(lo_i, hi_i, n)
    return [(video.frame_at_index(i), video.frame_time(i)) for i in indices]


@dataclass(frozen=True)
class SearchPass:
    """One refinement step: the window shown and the frame chosen."""

    pass_index: int
    center_s: float
    width_s: float
    n_frames: int
    chosen_label: int
    chosen_time_s: float
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "pass_index": self.pass_index,
            "center_s": self.center_s,
            "width_s": self.width_s,
            "n_frames": self.n_frames,
            "chosen_label": self.chosen_label,
            "chosen_time_s": self.chosen_time_s,
            "fallback": self.fallback,
        }


@dataclass
class BoundaryEstimate:
    """The outcome of one boundary search."""

    task_index: int
    boundary: str
    time_s: float
    trace: list[SearchPass] = field(default_factory=list)
    degenerate: bool = False
    failed: bool = False
    error: str | None = None
    split_index: int | None = None


def _center_label(labels: Sequence[int]) -> int:
    """Fallback pick when the model never names a valid frame.

    The middle of the grid is the least-wrong guess: it keeps the next
    window centered where the current one was. Even counts round down
    to the earlier of the two middle frames.
    """
    ordered = sorted(labels)
    return ordered[(len(ordered) + 1) // 2 - 1]


def _ask(backend: VlmBackend, grid_image: FrameGrid, prompt: str,
         context: QueryContext, retry_attempts: int) -> tuple[int, bool]:
    """Query once, re-asking on unparseable replies. Returns (label, fallback)."""
    image_bytes = grid_image.to_jpeg_bytes()
    last_error: Exception | None = None
    for attempt in range(1 + retry_attempts):
        raw = backend.query(image_bytes, prompt, context)
        try:
            answer = parse_answer(raw, grid_image.labels)
            return answer.selection, False
        except (AnswerParseError, EmptyAnswerError) as exc:
            last_error = exc
            log.warning("unusable reply (attempt %d/%d): %s",
                        attempt + 1, 1 + retry_attempts, exc)
    label = _center_label(grid_image.labels)
    log.warning("falling back to center label %d after %d attempts: %s",
                label, 1 + retry_attempts, last_error)
    return label, True


def tpivot_search(video: VideoSource, tasks: Sequence[str], focus_index: int,
                  boundary: str, params: SearchParams, backend: VlmBackend,
                  initial_window: TimeWindow | None = None,
                  debug_dir: str | Path | None = None) -> BoundaryEstimate:
    """Locate one task boundary by iterative window halving.

    The search runs one full-window pass plus ``params.iterations``
    shrink passes (or keeps going to frame level when
    ``params.until_frame_level`` is set). It stops early once the
    window no longer spans two distinct frames.
    """
    if initial_window is None:
        initial_window = TimeWindow(video.duration_s / 2, video.duration_s,
                                    video.duration_s)
    prompt = build_prompt(tasks, focus_index, boundary,
                          params.start_template, params.end_template)
    center = initial_window.center_s
    width = initial_window.width_s
    estimate = BoundaryEstimate(focus_index, boundary, time_s=center)
    total_passes = (_MAX_PASSES if params.until_frame_level
                    else params.iterations + 1)
    for pass_index in range(total_passes):
        window = TimeWindow(center, width, video.duration_s)
        try:
            frames = sample_frames(video, window, params.grid.n_cells)
        except DegenerateWindowError:
            estimate.degenerate = True
            break
        grid_image = compose_grid(frames, params.grid)
        context = QueryContext(label_map=dict(grid_image.label_map),
                               focus_index=focus_index, boundary=boundary)
        label, used_fallback = _ask(backend, grid_image, prompt, context,
                                    params.retry_attempts)
        chosen_time = grid_image.time_of(label)
        estimate.trace.append(SearchPass(
            pass_index, window.center_s, window.width_s, len(frames),
            label, chosen_time, used_fallback))
        if debug_dir is not None:
            render_debug(grid_image, Path(debug_dir) /
                         f"task{focus_index:02d}_{boundary}_pass{pass_index}")
        center = chosen_time
        width = width / params.shrink_factor
        estimate.time_s = chosen_time
    return estimate


def tpivot_search_split(video: VideoSource, tasks: Sequence[str],
                        focus_index: int, boundary: str,
                        params: SearchParams, backend: VlmBackend,
                        n_splits: int,
                        initial_window: TimeWindow | None = None,
                        debug_dir: str | Path | None = None
                        ) -> BoundaryEstimate:
    """Search within each of ``n_splits`` equal sub-windows and merge.

    Pre-dividing helps on very long videos where a whole-video grid is
    too coarse. Each sub-window is searched independently; a split's
    answer counts as a match when it lands strictly inside the split,
    because an answer pinned to a split edge means the boundary lies at
    or beyond that edge (edges shared with the video ends are exempt).
    The earliest matching split wins; if none match, the earliest
    split's answer is kept.
    """
    if n_splits < 1:
        raise ValidationError(f"n_splits must be >= 1, got {n_splits}")
    if n_splits == 1:
        return tpivot_search(video, tasks, focus_index, boundary, params,
                             backend, initial_window, debug_dir)
    if initial_window is None:
        initial_window = TimeWindow(video.duration_s / 2, video.duration_s,
                                    video.duration_s)
    lo, hi = initial_window.effective_range()
    edges = [lo + k * (hi - lo) / n_splits for k in range(n_splits + 1)]
    tol = 0.5 / video.fps
    candidates: list[BoundaryEstimate] = []
    for k in range(n_splits):
        sub_lo, sub_hi = edges[k], edges[k + 1]
        sub = TimeWindow((sub_lo + sub_hi) / 2, sub_hi - sub_lo,
                         video.duration_s)
        est = tpivot_search(video, tasks, focus_index, boundary, params,
                            backend, sub, debug_dir)
        est.split_index = k
        candidates.append(est)
    for k, est in enumerate(candidates):
        sub_lo, sub_hi = edges[k], edges[k + 1]
        clear_of_low = (est.time_s > sub_lo + tol or sub_lo <= tol)
        clear_of_high = (est.time_s < sub_hi - tol
                         or sub_hi >= video.duration_s - tol)
        if clear_of_low and clear_of_high:
            return est
    return candidates[0]


def uniform_baseline(duration_s: float, n_tasks: int) -> list[float]:
    """Transition times assuming all tasks take equal time."""
    if n_tasks < 1:
        raise ValidationError(f"need at least one task, got {n_tasks}")
    if duration_s <= 0:
        raise ValidationError(f"duration must be positive, got {duration_s}")
    return [i * duration_s / n_tasks for i in range(1, n_tasks)]


def _baseline_boundary(duration_s: float, n_tasks: int, task_index: int,
                       boundary: str) -> float:
    """Where the uniform baseline puts one task boundary."""
    if boundary == "start":
        return task_index * duration_s / n_tasks
    return (task_index + 1) * duration_s / n_tasks


def _searched_or_fallback(video: VideoSource, tasks: Sequence[str],
                          focus_index: int, boundary: str,
                          params: SearchParams, backend: VlmBackend,
                          initial_window: TimeWindow | None,
                          debug_dir: str | Path | None,
                          n_splits: int = 1) -> BoundaryEstimate:
    try:
        return tpivot_search_split(video, tasks, focus_index, boundary,
                                   params, backend, n_splits,
                                   initial_window, debug_dir)
    except TpivotError as exc:
        log.error("search failed for task %d %s: %s", focus_index,
                  boundary, exc)
        return BoundaryEstimate(
            focus_index, boundary,
            time_s=_baseline_boundary(video.duration_s, len(tasks),
                                      focus_index, boundary),
            failed=True, error=str(exc))


def localize_tasks_parallel(
        video: VideoSource, tasks: Sequence[str], params: SearchParams,
        backend: VlmBackend, max_workers: int = 4,
        debug_dir: str | Path | None = None, n_splits: int = 1,
) -> tuple[list[BoundaryEstimate], list[BoundaryEstimate]]:
    """Search every task's start, then every task's end.

    Start searches cover the whole video and run concurrently. End
    searches then run over ``[start_k, duration]``, where ``start_k``
    is the start estimate repaired to be non-decreasing across tasks,
    so the end window can never open before the task begins. A window
    too narrow to sample yields a degenerate estimate at its center
    rather than an error.
    """
    n = len(tasks)
    if n == 0:
        raise ValidationError("task list is empty")
    duration = video.duration_s

    def search_start(k: int) -> BoundaryEstimate:
        return _searched_or_fallback(video, tasks, k, "start", params,
                                     backend, None, debug_dir, n_splits)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        starts = list(pool.map(search_start, range(n)))

    repaired = repair_starts([e.time_s for e in starts])

    def search_end(k: int) -> BoundaryEstimate:
        lo = min(repaired[k], duration)
        width = duration - lo
        min_width = 1.0 / video.fps
        if width < min_width:
            # The start estimate sits at (or past) the last frame; the
            # end cannot be searched and is pinned to the video end.
            return BoundaryEstimate(k, "end", time_s=duration,
                                    degenerate=True)
        window = TimeWindow((lo + duration) / 2, width, duration)
        return _searched_or_fallback(video, tasks, k, "end", params,
                                     backend, window, debug_dir, n_splits)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        ends = list(pool.map(search_end, range(n)))

    return starts, ends


def repair_starts(start_times: Sequence[float]) -> list[float]:
    """Force start times to be non-decreasing in task order.

    Each task starts no earlier than its predecessor: later tasks are
    pushed forward onto the running maximum.
    """
    repaired: list[float] = []
    current = float("-inf")
    for t in start_times:
        current = max(current, t)
        repaired.append(current)
    return repaired


def repair_ends(end_times: Sequence[float]) -> list[float]:
    """Clamp each end time by its successor, in ascending task order.

    Task ``i`` cannot end after task ``i + 1`` does. The sweep runs
    ascending and in place, so each comparison sees the raw successor.
    """
    repaired = list(end_times)
    for i in range(len(repaired) - 1):
        repaired[i] = min(repaired[i], repaired[i + 1])
    return repaired


def estimate_transitions(start_times: Sequence[float],
                         end_times: Sequence[float]) -> list[float]:
    """Merge per-task boundary estimates into transition times.

    Starts are repaired to be non-decreasing and ends clamped by their
    successors; the transition between consecutive tasks is then the
    midpoint of the earlier task's end and the later task's start.
    """
    if len(start_times) != len(end_times):
        raise ValidationError(
            f"{len(start_times)} starts vs {len(end_times)} ends")
    starts = repair_starts(start_times)
    ends = repair_ends(end_times)
    return [(ends[i] + starts[i + 1]) / 2 for i in range(len(starts) - 1)]
