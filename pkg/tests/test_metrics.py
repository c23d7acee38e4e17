import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tpivot.errors import ValidationError
from tpivot.metrics import f1, iou, mof, to_frame_labels

# Naive per-frame twins, written from the metric definitions with plain
# loops. The real implementations must agree with these bit for bit.


def naive_mof(pred, truth):
    matches = 0
    for p, t in zip(pred, truth):
        if p == t:
            matches += 1
    return 100.0 * matches / len(truth)


def naive_iou(pred, truth):
    labels = sorted(set(pred) | set(truth))
    scores = []
    for label in labels:
        intersection = 0
        union = 0
        for p, t in zip(pred, truth):
            if p == label and t == label:
                intersection += 1
            if p == label or t == label:
                union += 1
        scores.append(intersection / union)
    return 100.0 * sum(scores) / len(scores)


def naive_f1(pred, truth):
    labels = sorted(set(truth))
    scores = []
    for label in labels:
        tp = fp = fn = 0
        for p, t in zip(pred, truth):
            if p == label and t == label:
                tp += 1
            elif p == label:
                fp += 1
            elif t == label:
                fn += 1
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall > 0:
            scores.append(2.0 * precision * recall / (precision + recall))
        else:
            scores.append(0.0)
    return 100.0 * sum(scores) / len(scores)


def test_spot_values():
    pred, truth = [1, 1, 2, 2], [1, 2, 2, 2]
    assert mof(pred, truth) == 75.0
    assert iou(pred, truth) == pytest.approx(58.33, abs=0.01)
    assert f1(pred, truth) == pytest.approx(73.33, abs=0.01)


def test_perfect_prediction_scores_100():
    labels = [0, 0, 1, 1, 1, 2]
    assert mof(labels, labels) == 100.0
    assert iou(labels, labels) == 100.0
    assert f1(labels, labels) == 100.0


def test_spurious_predicted_label_pulls_iou_down():
    truth = [0, 0, 0, 0]
    pred = [0, 0, 0, 7]
    # Label 7 exists only in the prediction: IoU averages it in at 0.
    assert iou(pred, truth) == pytest.approx(100.0 * (0.75 + 0.0) / 2)
    # F1 only averages over truth labels.
    assert f1(pred, truth) == pytest.approx(
        100.0 * (2 * (3 / 4) * 1.0 / (3 / 4 + 1.0)))


def test_validation_errors():
    with pytest.raises(ValidationError):
        mof([1, 2], [1])
    with pytest.raises(ValidationError):
        iou([], [])
    with pytest.raises(ValidationError):
        f1([[1, 2]], [[1, 2]])


def test_matches_naive_on_seeded_instances():
    rng = random.Random(99)
    for _ in range(150):
        n = rng.randint(1, 200)
        k = rng.randint(1, 6)
        pred = [rng.randrange(k) for _ in range(n)]
        truth = [rng.randrange(k) for _ in range(n)]
        assert mof(pred, truth) == naive_mof(pred, truth)
        assert iou(pred, truth) == naive_iou(pred, truth)
        assert f1(pred, truth) == naive_f1(pred, truth)


@given(st.lists(st.integers(min_value=0, max_value=4), min_size=1,
                max_size=60).flatmap(
                    lambda t: st.tuples(
                        st.just(t),
                        st.lists(st.integers(min_value=0, max_value=4),
                                 min_size=len(t), max_size=len(t)))))
def test_matches_naive_property(pair):
    truth, pred = pair
    assert mof(pred, truth) == naive_mof(pred, truth)
    assert iou(pred, truth) == naive_iou(pred, truth)
    assert f1(pred, truth) == naive_f1(pred, truth)


def test_to_frame_labels_basic():
    labels = to_frame_labels([1.0, 3.0], duration_s=4.0, fps=2.0, n_tasks=3)
    # Frames at 0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5 s.
    assert labels.tolist() == [0, 0, 1, 1, 1, 1, 2, 2]


def test_frame_on_transition_belongs_to_later_task():
    labels = to_frame_labels([1.0], duration_s=2.0, fps=1.0, n_tasks=2)
    assert labels.tolist() == [0, 1]


def test_to_frame_labels_counts_frames_by_rounding():
    assert len(to_frame_labels([], 1.04, 10.0, 1)) == 10
    assert len(to_frame_labels([], 1.06, 10.0, 1)) == 11


def test_to_frame_labels_validation():
    with pytest.raises(ValidationError):
        to_frame_labels([1.0], 4.0, 2.0, 3)
    with pytest.raises(ValidationError):
        to_frame_labels([3.0, 1.0], 4.0, 2.0, 3)
    with pytest.raises(ValidationError):
        to_frame_labels([1.0, 5.0], 4.0, 2.0, 3)
    with pytest.raises(ValidationError):
        to_frame_labels([], 0.0, 2.0, 1)


def test_to_frame_labels_uniform_blocks():
    labels = to_frame_labels([2.0, 4.0, 6.0], 8.0, 10.0, 4)
    counts = np.bincount(labels)
    assert counts.tolist() == [20, 20, 20, 20]


def test_transition_pair_roundtrip_scores_100():
    transitions = [1.3, 2.7]
    a = to_frame_labels(transitions, 5.0, 10.0, 3)
    b = to_frame_labels(transitions, 5.0, 10.0, 3)
    assert mof(a, b) == 100.0
