"""Exception hierarchy for the tpivot package.

Every error raised by this package derives from :class:`TpivotError`, so
callers (including the CLI) can separate our failures from genuine bugs.
The CLI maps subclasses onto exit codes: validation problems exit 1,
backend problems exit 2.
"""

from __future__ import annotations


class TpivotError(Exception):
    """Base class for all errors raised by tpivot."""


class ValidationError(TpivotError):
    """Bad user input: files, arguments, configuration, annotations."""


class ConfigError(ValidationError):
    """Invalid or incomplete run configuration."""


class VideoError(ValidationError):
    """A video source could not be opened or decoded."""


class FrameRangeError(VideoError):
    """A timestamp or frame index falls outside the video."""


class AnnotationError(ValidationError):
    """A ground-truth segmentation violates its invariants.

    ``indices`` lists the offending segment positions (0-based) when the
    problem is attributable to particular segments.
    """

    def __init__(self, message: str, indices: list[int] | None = None):
        super().__init__(message)
        self.indices = indices or []


class BackendError(TpivotError):
    """A model backend failed after exhausting its own retries."""


class AnswerParseError(BackendError):
    """The model reply contained no JSON object with a "points" key."""


class EmptyAnswerError(BackendError):
    """The model reply parsed but selected no valid label."""


class ReplayMissError(BackendError):
    """A replay store has no entry for the requested query."""


class DegenerateWindowError(TpivotError):
    """A search window is narrower than one frame period."""
