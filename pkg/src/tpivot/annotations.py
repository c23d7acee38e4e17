"""Ground-truth segmentations and localization results on disk.

Both artifacts share one JSON envelope::

    {"video_id": ..., "fps": ..., "duration_s": ..., "segments": [
        {"label": ..., "start_s": ..., "end_s": ...}, ...]}

A ground-truth file stops there. A localization result additionally
carries the per-task boundary estimates, the derived transition times,
and a ``meta`` block recording how the run was configured, so that any
result file is reproducible from its own contents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import AnnotationError

# Two adjacent segments must share their boundary to this tolerance.
CONTIGUITY_TOL_S = 1e-6


@dataclass(frozen=True)
class Segment:
    """One labeled, contiguous span of video time."""

    label: str
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class GroundTruthSegmentation:
    """A full partition of one video into ordered task segments."""

    video_id: str
    fps: float
    duration_s: float
    segments: tuple[Segment, ...]

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.fps <= 0:
            raise AnnotationError(f"fps must be positive, got {self.fps}")
        if self.duration_s <= 0:
            raise AnnotationError(
                f"duration_s must be positive, got {self.duration_s}")
        if not self.segments:
            raise AnnotationError("segmentation has no segments")
        bad = [i for i, s in enumerate(self.segments)
               if not s.label or not s.label.strip()]
        if bad:
            raise AnnotationError(f"segments with empty labels: {bad}", bad)
        bad = [i for i, s in enumerate(self.segments) if s.end_s <= s.start_s]
        if bad:
            raise AnnotationError(
                f"segments with end_s <= start_s at indices {bad}", bad)
        bad = [i + 1 for i in range(len(self.segments) - 1)
               if abs(self.segments[i + 1].start_s
                      - self.segments[i].end_s) > CONTIGUITY_TOL_S]
        if bad:
            raise AnnotationError(
                f"segments not contiguous at indices {bad} "
                f"(gap or overlap beyond {CONTIGUITY_TOL_S}s)", bad)
        # The partition must cover the whole video. Frame-sampled
        # annotations can be off by up to one frame period at either end.
        edge_tol = 1.0 / self.fps + 1e-9
        if abs(self.segments[0].start_s) > edge_tol:
            raise AnnotationError(
                f"first segment starts at {self.segments[0].start_s}, "
                f"expected 0", [0])
        last = len(self.segments) - 1
        if abs(self.segments[last].end_s - self.duration_s) > edge_tol:
            raise AnnotationError(
                f"last segment ends at {self.segments[last].end_s}, "
                f"expected duration {self.duration_s}", [last])

    @property
    def task_labels(self) -> list[str]:
        return [s.label for s in self.segments]

    @property
    def transitions(self) -> list[float]:
        """Internal boundary times, one per adjacent segment pair."""
        return [s.end_s for s in self.segments[:-1]]

    def true_boundary(self, task_index: int, boundary: str) -> float:
        """Ground-truth time of one task boundary.

        ``task_index`` is 0-based; ``boundary`` is "start" or "end".
        """
        seg = self.segments[task_index]
        if boundary == "start":
            return seg.start_s
        if boundary == "end":
            return seg.end_s
        raise ValueError(f"boundary must be 'start' or 'end', got {boundary!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "fps": self.fps,
            "duration_s": self.duration_s,
            "segments": [
                {"label": s.label, "start_s": s.start_s, "end_s": s.end_s}
                for s in self.segments],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GroundTruthSegmentation":
        try:
            segments = tuple(
                Segment(d["label"], float(d["start_s"]), float(d["end_s"]))
                for d in data["segments"])
            return cls(
                video_id=str(data["video_id"]),
                fps=float(data["fps"]),
                duration_s=float(data["duration_s"]),
                segments=segments,
            )
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"malformed annotation object: {exc}") from exc


def load_annotations(path: str | Path) -> GroundTruthSegmentation:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AnnotationError(f"cannot read annotations {path}: {exc}") from exc
    return GroundTruthSegmentation.from_dict(data)


def save_annotations(gt: GroundTruthSegmentation, path: str | Path) -> None:
    gt.validate()
    Path(path).write_text(json.dumps(gt.to_dict(), indent=2) + "\n")


def convert_frame_annotations(text: str, fps: float,
                              video_id: str) -> GroundTruthSegmentation:
    """Convert frame-span annotation text to a segmentation.

    Input lines look like ``"1-744 pour_milk"``: 1-based inclusive frame
    ranges followed by the label. Frame ``f`` spans the half-open time
    interval ``[(f-1)/fps, f/fps)``, so a range ``a-b`` becomes
    ``[(a-1)/fps, b/fps)`` in seconds. Blank lines are ignored.
    """
    segments = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            span, label = line.split(maxsplit=1)
            start_str, end_str = span.split("-")
            first, last = int(start_str), int(end_str)
        except ValueError as exc:
            raise AnnotationError(
                f"{video_id}: cannot parse line {lineno}: {line!r}") from exc
        if first < 1 or last < first:
            raise AnnotationError(
                f"{video_id}: bad frame range on line {lineno}: {line!r}")
        segments.append(Segment(label.strip(), (first - 1) / fps, last / fps))
    if not segments:
        raise AnnotationError(f"{video_id}: no annotation lines found")
    duration_s = segments[-1].end_s
    return GroundTruthSegmentation(video_id, fps, duration_s, tuple(segments))


@dataclass(frozen=True)
class BoundaryResult:
    """The estimated start and end of one task, with failure flags.

    ``fallback`` marks boundaries that the search could not estimate and
    that were filled from the uniform baseline instead.
    """

    label: str
    start_s: float
    end_s: float
    start_fallback: bool = False
    end_fallback: bool = False

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "label": self.label,
            "start_s": self.start_s,
            "end_s": self.end_s,
        }
        if self.start_fallback:
            d["start_fallback"] = True
        if self.end_fallback:
            d["end_fallback"] = True
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BoundaryResult":
        return cls(
            label=str(data["label"]),
            start_s=float(data["start_s"]),
            end_s=float(data["end_s"]),
            start_fallback=bool(data.get("start_fallback", False)),
            end_fallback=bool(data.get("end_fallback", False)),
        )


@dataclass
class LocalizationRecord:
    """One localization run: estimated boundaries, transitions, segments.

    ``transitions`` has exactly ``len(tasks) - 1`` entries and is
    non-decreasing; together with time 0 and the video duration it
    induces the predicted segmentation in ``segments``.
    """

    video_id: str
    fps: float
    duration_s: float
    tasks: list[str]
    boundaries: list[BoundaryResult]
    transitions: list[float]
    segments: list[Segment]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = len(self.tasks)
        if n == 0:
            raise AnnotationError("record has no tasks")
        if len(self.boundaries) != n:
            raise AnnotationError(
                f"expected {n} boundary entries, got {len(self.boundaries)}")
        if len(self.transitions) != n - 1:
            raise AnnotationError(
                f"expected {n - 1} transitions for {n} tasks, "
                f"got {len(self.transitions)}")
        bad = [i for i in range(1, len(self.transitions))
               if self.transitions[i] < self.transitions[i - 1]]
        if bad:
            raise AnnotationError(
                f"transitions decrease at indices {bad}", bad)
        bad = [i for i, t in enumerate(self.transitions)
               if not (0.0 <= t <= self.duration_s)]
        if bad:
            raise AnnotationError(
                f"transitions outside [0, duration] at indices {bad}", bad)

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "fps": self.fps,
            "duration_s": self.duration_s,
            "tasks": list(self.tasks),
            "boundaries": [b.to_dict() for b in self.boundaries],
            "transitions": list(self.transitions),
            "segments": [
                {"label": s.label, "start_s": s.start_s, "end_s": s.end_s}
                for s in self.segments],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LocalizationRecord":
        try:
            return cls(
                video_id=str(data["video_id"]),
                fps=float(data["fps"]),
                duration_s=float(data["duration_s"]),
                tasks=[str(t) for t in data["tasks"]],
                boundaries=[BoundaryResult.from_dict(b)
                            for b in data["boundaries"]],
                transitions=[float(t) for t in data["transitions"]],
                segments=[Segment(d["label"], float(d["start_s"]),
                                  float(d["end_s"]))
                          for d in data["segments"]],
                meta=dict(data.get("meta", {})),
            )
        except (KeyError, TypeError) as exc:
            raise AnnotationError(f"malformed record object: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "LocalizationRecord":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise AnnotationError(f"cannot read record {path}: {exc}") from exc
        return cls.from_dict(data)
