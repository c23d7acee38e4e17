"""Training-free localization of described tasks in long videos.

The package localizes where each step of a described activity starts
and ends by iteratively showing a vision-language model grids of
numbered frames and narrowing a time window around its answers. The
same machinery runs against a ground-truth oracle for testing and
against recorded replies for reproducible offline runs.

Typical use::

    from tpivot import TPivotLocalizer
    from tpivot.backends import OracleBackend

    localizer = TPivotLocalizer(backend=..., grid="5x5")
    record = localizer.predict("video_dir/", ["pour milk", "stir"])
    print(record.transitions)
"""

__version__ = "0.1.0"

from .annotations import (
    BoundaryResult,
    GroundTruthSegmentation,
    LocalizationRecord,
    Segment,
    convert_frame_annotations,
    load_annotations,
    save_annotations,
)
from .backends import (
    HttpBackend,
    OracleBackend,
    QueryContext,
    RecordingBackend,
    ReplayBackend,
    VlmBackend,
    record,
)
from .errors import (
    AnnotationError,
    AnswerParseError,
    BackendError,
    ConfigError,
    DegenerateWindowError,
    EmptyAnswerError,
    FrameRangeError,
    ReplayMissError,
    TpivotError,
    ValidationError,
    VideoError,
)
from .grid import (
    FrameGrid,
    GridSpec,
    compose_grid,
    parse_grid,
    render_debug,
    spec_for_style,
)
from .localizer import TPivotLocalizer, transitions_to_segments
from .metrics import f1, iou, mof, to_frame_labels
from .prompts import END_TEMPLATE, START_TEMPLATE, build_prompt, parse_answer
from .search import (
    BoundaryEstimate,
    SearchParams,
    TimeWindow,
    estimate_transitions,
    localize_tasks_parallel,
    repair_ends,
    repair_starts,
    sample_frames,
    tpivot_search,
    uniform_baseline,
)
from .video import (
    FfmpegVideoSource,
    FunctionVideoSource,
    ImageDirectorySource,
    VideoSource,
    open_video,
)

__all__ = [
    "__version__",
    "AnnotationError", "AnswerParseError", "BackendError", "BoundaryEstimate",
    "BoundaryResult", "ConfigError", "DegenerateWindowError",
    "EmptyAnswerError", "END_TEMPLATE", "f1", "FfmpegVideoSource",
    "FrameGrid", "FrameRangeError", "FunctionVideoSource",
    "GridSpec", "GroundTruthSegmentation", "HttpBackend",
    "ImageDirectorySource", "iou", "LocalizationRecord",
    "localize_tasks_parallel", "load_annotations", "mof", "OracleBackend",
    "open_video", "parse_answer", "parse_grid", "QueryContext", "record",
    "RecordingBackend", "render_debug", "repair_ends", "repair_starts",
    "ReplayBackend", "ReplayMissError", "sample_frames", "save_annotations",
    "SearchParams", "Segment", "spec_for_style", "START_TEMPLATE",
    "TimeWindow", "to_frame_labels", "TPivotLocalizer", "TpivotError",
    "tpivot_search", "transitions_to_segments", "uniform_baseline",
    "ValidationError", "VideoError", "VideoSource", "VlmBackend",
    "build_prompt", "compose_grid", "convert_frame_annotations",
    "estimate_transitions",
]
