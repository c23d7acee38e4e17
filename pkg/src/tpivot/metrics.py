"""Frame-level segmentation metrics.

Predictions and ground truth are both reduced to one task label per
frame; the metrics then compare the two label arrays. All three scores
are percentages in [0, 100].

* MoF: fraction of frames whose labels match.
* IoU: per-task intersection over union, averaged over every task
  present in either array.
* F1: per-task harmonic mean of precision and recall, averaged over
  the tasks present in the ground truth.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError


def to_frame_labels(transitions: Sequence[float], duration_s: float,
                    fps: float, n_tasks: int) -> np.ndarray:
    """Expand transition times into one 0-based task index per frame.

    Frame ``f`` sits at time ``f / fps`` and belongs to task ``i`` when
    its time falls in the half-open interval between transition ``i-1``
    and transition ``i`` (with the video ends as outer boundaries). A
    frame exactly on a transition belongs to the later task.
    """
    if duration_s <= 0 or fps <= 0:
        raise ValidationError(
            f"need positive duration and fps, got {duration_s}, {fps}")
    if n_tasks < 1:
        raise ValidationError(f"need at least one task, got {n_tasks}")
    transitions = list(transitions)
    if len(transitions) != n_tasks - 1:
        raise ValidationError(
            f"expected {n_tasks - 1} transitions for {n_tasks} tasks, "
            f"got {len(transitions)}")
    if any(b < a for a, b in zip(transitions, transitions[1:])):
        raise ValidationError("transitions must be non-decreasing")
    if transitions and not (0.0 <= transitions[0]
                            and transitions[-1] <= duration_s):
        raise ValidationError("transitions must lie within [0, duration]")
    n_frames = max(1, round(duration_s * fps))
    times = np.arange(n_frames) / fps
    return np.searchsorted(np.asarray(transitions), times, side="right")


def _as_labels(pred: Sequence[int], truth: Sequence[int]) -> tuple[np.ndarray,
                                                                   np.ndarray]:
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.ndim != 1 or t.ndim != 1:
        raise ValidationError("label arrays must be one-dimensional")
    if len(p) != len(t):
        raise ValidationError(
            f"length mismatch: {len(p)} predicted vs {len(t)} truth frames")
    if len(p) == 0:
        raise ValidationError("label arrays are empty")
    return p, t


def mof(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Percentage of frames whose predicted label matches the truth."""
    p, t = _as_labels(pred, truth)
    matches = int(np.sum(p == t))
    return 100.0 * matches / len(t)


def iou(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Mean per-task intersection over union, as a percentage.

    Averaged over every label occurring in either array, so spurious
    predicted tasks pull the score down.
    """
    p, t = _as_labels(pred, truth)
    labels = sorted(set(p.tolist()) | set(t.tolist()))
    scores = []
    for label in labels:
        in_p = p == label
        in_t = t == label
        intersection = int(np.sum(in_p & in_t))
        union = int(np.sum(in_p | in_t))
        scores.append(intersection / union)
    return 100.0 * sum(scores) / len(scores)


def f1(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Mean per-task F1 score over the tasks present in the truth."""
    p, t = _as_labels(pred, truth)
    labels = sorted(set(t.tolist()))
    scores = []
    for label in labels:
        in_p = p == label
        in_t = t == label
        tp = int(np.sum(in_p & in_t))
        fp = int(np.sum(in_p & ~in_t))
        fn = int(np.sum(~in_p & in_t))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall > 0:
            scores.append(2.0 * precision * recall / (precision + recall))
        else:
            scores.append(0.0)
    return 100.0 * sum(scores) / len(scores)
