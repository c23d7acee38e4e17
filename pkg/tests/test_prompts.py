import json

import pytest
from hypothesis import given, strategies as st

from tpivot.errors import AnswerParseError, EmptyAnswerError
from tpivot.prompts import (
    build_prompt,
    format_task_focus,
    format_task_sequence,
    parse_answer,
)

TASKS = ["wash the hands", "crack the egg", "whisk the bowl"]

EXPECTED_START_PROMPT = (
    "I will show an image sequence of human operation. It contains the "
    "following tasks: 1. wash the hands, 2. crack the egg, 3. whisk the "
    "bowl. I have annotated the images with numbered circles. Choose the "
    "number that is closest to the moment when the (2. crack the egg) "
    "has started. You are a five-time world champion in this game. Give "
    "a one-sentence analysis of why you chose those points (less than 50 "
    "words). Provide your answer at the end in a JSON file in this "
    'format: {"points": []}.'
)


def test_start_prompt_snapshot():
    assert build_prompt(TASKS, 1, "start") == EXPECTED_START_PROMPT


def test_end_prompt_differs_only_in_verb():
    start = build_prompt(TASKS, 1, "start")
    end = build_prompt(TASKS, 1, "end")
    assert end == start.replace("has started", "has ended")


def test_prompt_is_deterministic():
    assert build_prompt(TASKS, 0, "start") == build_prompt(TASKS, 0, "start")


def test_task_sequence_formatting():
    assert format_task_sequence(["a", "b"]) == "1. a, 2. b"
    with pytest.raises(ValueError):
        format_task_sequence([])


def test_task_focus_formatting():
    assert format_task_focus(TASKS, 2) == "3. whisk the bowl"
    with pytest.raises(ValueError):
        format_task_focus(TASKS, 3)


def test_bad_boundary_rejected():
    with pytest.raises(ValueError, match="boundary"):
        build_prompt(TASKS, 0, "middle")


def test_custom_template():
    template = "Find {task_focus} among {task_sequence}."
    prompt = build_prompt(TASKS, 0, "start", start_template=template)
    assert prompt == ("Find 1. wash the hands among 1. wash the hands, "
                      "2. crack the egg, 3. whisk the bowl.")


def test_template_must_keep_placeholders():
    with pytest.raises(ValueError, match="task_sequence"):
        build_prompt(TASKS, 0, "start", start_template="no placeholders")
    with pytest.raises(ValueError, match="task_focus"):
        build_prompt(TASKS, 0, "start",
                     start_template="tasks: {task_sequence}, pick one")


def test_parse_typical_reply():
    reply = ('The action begins around the middle of the row. '
             '{"points": [7]}')
    answer = parse_answer(reply, range(1, 10))
    assert answer.points == (7,)
    assert answer.selection == 7
    assert answer.raw_text == reply


def test_parse_last_json_object_wins():
    reply = ('Answer in this format: {"points": []}. '
             'The pour starts at frame 3. {"points": [3]}')
    assert parse_answer(reply, range(1, 10)).selection == 3


def test_parse_multiple_points_keeps_order():
    answer = parse_answer('{"points": [4, 2, 9]}', range(1, 10))
    assert answer.points == (4, 2, 9)
    assert answer.selection == 4


def test_parse_filters_invalid_entries():
    reply = '{"points": [true, "7", 3.5, 99, 6]}'
    answer = parse_answer(reply, range(1, 10))
    assert answer.points == (6,)


def test_parse_scalar_point_accepted():
    assert parse_answer('{"points": 5}', range(1, 10)).selection == 5


def test_parse_nested_json():
    reply = 'Analysis: {"note": {"points": [2]}} then {"points": [8]}'
    assert parse_answer(reply, range(1, 10)).selection == 8


def test_no_json_raises_parse_error():
    with pytest.raises(AnswerParseError):
        parse_answer("I cannot tell from these images.", range(1, 10))
    with pytest.raises(AnswerParseError):
        parse_answer('{"frames": [3]}', range(1, 10))


def test_all_filtered_raises_empty_error():
    with pytest.raises(EmptyAnswerError):
        parse_answer('{"points": [42]}', range(1, 10))
    with pytest.raises(EmptyAnswerError):
        parse_answer('{"points": []}', range(1, 10))


@given(st.text(max_size=200))
def test_parse_never_raises_unexpected(noise):
    try:
        parse_answer(noise, range(1, 26))
    except (AnswerParseError, EmptyAnswerError):
        pass


@given(st.text(max_size=120), st.integers(min_value=1, max_value=25))
def test_parse_recovers_appended_answer(noise, label):
    reply = noise + "\n" + json.dumps({"points": [label]})
    assert parse_answer(reply, range(1, 26)).selection == label
