"""Prompt construction and answer parsing for boundary queries.

One query shows the model an annotated grid and asks for the numbered
frame closest to where a given task starts (or ends). The templates use
``{task_sequence}`` and ``{task_focus}`` placeholders; substitution is
plain string replacement because the template text itself contains JSON
braces that ``str.format`` would trip over.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import AnswerParseError, EmptyAnswerError

START_TEMPLATE = (
    "I will show an image sequence of human operation. It contains the "
    "following tasks: {task_sequence}. I have annotated the images with "
    "numbered circles. Choose the number that is closest to the moment "
    "when the ({task_focus}) has started. You are a five-time world "
    "champion in this game. Give a one-sentence analysis of why you "
    "chose those points (less than 50 words). Provide your answer at "
    'the end in a JSON file in this format: {"points": []}.'
)

END_TEMPLATE = (
    "I will show an image sequence of human operation. It contains the "
    "following tasks: {task_sequence}. I have annotated the images with "
    "numbered circles. Choose the number that is closest to the moment "
    "when the ({task_focus}) has ended. You are a five-time world "
    "champion in this game. Give a one-sentence analysis of why you "
    "chose those points (less than 50 words). Provide your answer at "
    'the end in a JSON file in this format: {"points": []}.'
)


def format_task_sequence(tasks: Sequence[str]) -> str:
    """Render the full task list as ``"1. wash, 2. peel, 3. cut"``."""
    if not tasks:
        raise ValueError("task list is empty")
    return ", ".join(f"{i}. {label}" for i, label in enumerate(tasks, start=1))


def format_task_focus(tasks: Sequence[str], focus_index: int) -> str:
    """Render the queried task as ``"2. peel"`` (0-based ``focus_index``)."""
    if not (0 <= focus_index < len(tasks)):
        raise ValueError(
            f"focus_index {focus_index} outside 0..{len(tasks) - 1}")
    return f"{focus_index + 1}. {tasks[focus_index]}"


def build_prompt(tasks: Sequence[str], focus_index: int, boundary: str,
                 start_template: str | None = None,
                 end_template: str | None = None) -> str:
    """Build the query text for one task boundary.

    ``boundary`` is "start" or "end". Custom templates must keep the
    ``{task_sequence}`` and ``{task_focus}`` placeholders.
    """
    if boundary == "start":
        template = start_template or START_TEMPLATE
    elif boundary == "end":
        template = end_template or END_TEMPLATE
    else:
        raise ValueError(f"boundary must be 'start' or 'end', got {boundary!r}")
    for placeholder in ("{task_sequence}", "{task_focus}"):
        if placeholder not in template:
            raise ValueError(f"template is missing {placeholder}")
    return (template
            .replace("{task_sequence}", format_task_sequence(tasks))
            .replace("{task_focus}", format_task_focus(tasks, focus_index)))


@dataclass(frozen=True)
class VlmAnswer:
    """A parsed model reply: the surviving frame numbers plus raw text."""

    points: tuple[int, ...]
    raw_text: str

    @property
    def selection(self) -> int:
        """The single frame number this answer selects (first point)."""
        return self.points[0]


_BRACE_RE = re.compile(r"\{")


def _json_candidates(text: str) -> Iterable[dict]:
    """Yield every JSON object decodable from some ``{`` in ``text``."""
    decoder = json.JSONDecoder()
    for match in _BRACE_RE.finditer(text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj


def parse_answer(raw_text: str, valid_labels: Iterable[int]) -> VlmAnswer:
    """Extract the selected frame numbers from a model reply.

    The reply is free text ending in a JSON object with a "points" key;
    the last such object wins (models sometimes restate the requested
    format before answering). Entries that are not integers or name no
    cell in the grid are dropped. A reply with no candidate object
    raises :class:`AnswerParseError`; one whose points all get filtered
    out raises :class:`EmptyAnswerError`.
    """
    valid = set(valid_labels)
    chosen: dict | None = None
    for obj in _json_candidates(raw_text):
        if "points" in obj:
            chosen = obj
    if chosen is None:
        raise AnswerParseError(
            f"no JSON object with a 'points' key in reply: {raw_text[:200]!r}")
    raw_points = chosen["points"]
    if not isinstance(raw_points, list):
        raw_points = [raw_points]
    points = tuple(p for p in raw_points
                   if isinstance(p, int) and not isinstance(p, bool)
                   and p in valid)
    if not points:
        raise EmptyAnswerError(
            f"reply selected no valid frame number "
            f"(points={raw_points!r}, valid={sorted(valid)})")
    return VlmAnswer(points, raw_text)
