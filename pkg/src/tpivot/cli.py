"""Command-line interface.

Subcommands: localize, evaluate, sweep, synth, convert-annotations,
dump-grid. Exit codes: 0 success, 1 validation or configuration error,
2 backend failure, 3 partial failure (some boundaries or videos failed
but a result was still produced).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .annotations import convert_frame_annotations, load_annotations, save_annotations
from .config import (
    RunConfig,
    make_backend,
    make_backend_factory,
    parse_config_file,
    resolve_config,
)
from .errors import BackendError, TpivotError, ValidationError
from .grid import STYLE_PRESETS, compose_grid, parse_grid, render_debug, spec_for_style
from .localizer import TPivotLocalizer
from .report import EvalOptions, evaluate, sweep, write_csv, write_json
from .search import TimeWindow, sample_frames
from .synth import generate_dataset
from .video import open_video

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND = 2
EXIT_PARTIAL = 3


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run configuration")
    group.add_argument("--config", metavar="FILE",
                       help="key = value config file")
    group.add_argument("--backend",
                       choices=["http", "oracle", "noisy-oracle", "replay"])
    group.add_argument("--model", help="model name for the http backend")
    group.add_argument("--endpoint", help="OpenAI-compatible API base URL")
    group.add_argument("--grid", help="grid size, e.g. 5x5")
    group.add_argument("--style", choices=sorted(STYLE_PRESETS),
                       help="annotation style preset")
    group.add_argument("--canvas-px", type=int,
                       help="longest side of the composed grid image")
    group.add_argument("--iterations", type=int,
                       help="window halvings after the first pass")
    group.add_argument("--shrink-factor", type=float)
    group.add_argument("--retry-attempts", type=int,
                       help="re-asks per query before the center fallback")
    group.add_argument("--until-frame-level",
                       action=argparse.BooleanOptionalAction, default=None,
                       help="keep halving until single-frame resolution")
    group.add_argument("--split-segments", type=int, metavar="N",
                       help="pre-divide each search window into N splits")
    group.add_argument("--workers", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--noise-std-s", type=float,
                       help="noisy-oracle timing noise (seconds)")
    group.add_argument("--rate-limit-rps", type=float)
    group.add_argument("--timeout-s", type=float)
    group.add_argument("--http-retries", type=int)
    group.add_argument("--backoff-s", type=float)
    group.add_argument("--replay-store", metavar="FILE")
    group.add_argument("--record-store", metavar="FILE")
    group.add_argument("--fps", type=float,
                       help="frame rate override for image directories")


def _gather_config(args: argparse.Namespace) -> RunConfig:
    file_values = parse_config_file(args.config) if args.config else None
    names = [f for f in RunConfig.__dataclass_fields__]
    overrides = {name: getattr(args, name, None) for name in names}
    return resolve_config(file_values, overrides)


def _localizer_from(cfg: RunConfig, backend, debug_dir=None) -> TPivotLocalizer:
    return TPivotLocalizer(
        backend=backend, grid=cfg.grid, style=cfg.style,
        canvas_px=cfg.canvas_px, iterations=cfg.iterations,
        shrink_factor=cfg.shrink_factor, workers=cfg.workers,
        retry_attempts=cfg.retry_attempts,
        until_frame_level=cfg.until_frame_level,
        split_segments=cfg.split_segments, fps=cfg.fps,
        start_template=cfg.start_template, end_template=cfg.end_template,
        debug_dir=debug_dir)


def _eval_options(cfg: RunConfig, limit: int | None = None) -> EvalOptions:
    return EvalOptions(
        canvas_px=cfg.canvas_px, iterations=cfg.iterations,
        shrink_factor=cfg.shrink_factor, workers=cfg.workers,
        retry_attempts=cfg.retry_attempts,
        until_frame_level=cfg.until_frame_level,
        split_segments=cfg.split_segments,
        start_template=cfg.start_template, end_template=cfg.end_template,
        limit=limit)


def _parse_tasks(text: str) -> list[str]:
    tasks = [t.strip() for t in text.split(",")]
    if not all(tasks) or not tasks:
        raise ValidationError(f"bad task list: {text!r}")
    return tasks


def cmd_localize(args: argparse.Namespace) -> int:
    cfg = _gather_config(args)
    truth = load_annotations(args.annotations) if args.annotations else None
    if args.tasks:
        tasks = _parse_tasks(args.tasks)
    elif truth is not None:
        tasks = truth.task_labels
    else:
        raise ValidationError("need --tasks or --annotations")
    backend = make_backend(cfg, truth)
    localizer = _localizer_from(cfg, backend, debug_dir=args.debug_grids)
    record = localizer.predict(args.video, tasks)
    record.meta["run_config"] = cfg.to_meta()
    if args.out:
        record.save(args.out)
        log.info("wrote %s", args.out)
    else:
        print(json.dumps(record.to_dict(), indent=2, sort_keys=True))
    failures = [s for s in record.meta["searches"] if s["failed"]]
    if len(failures) == len(record.meta["searches"]):
        return EXIT_BACKEND
    if failures:
        log.warning("%d of %d boundary searches fell back to baseline",
                    len(failures), len(record.meta["searches"]))
        return EXIT_PARTIAL
    return EXIT_OK


def _report_exit_code(report: dict) -> int:
    method_rows = [r for r in report["rows"] if r["grid"] != "baseline"]
    scored = sum(r["n_videos_scored"] for r in method_rows)
    failed = sum(len(r["failed_videos"]) for r in method_rows)
    if scored == 0:
        return EXIT_BACKEND
    if failed:
        return EXIT_PARTIAL
    return EXIT_OK


def _emit_report(report: dict, args: argparse.Namespace) -> None:
    if args.out:
        write_json(report, args.out)
        log.info("wrote %s", args.out)
    if args.csv:
        write_csv(report, args.csv)
        log.info("wrote %s", args.csv)
    if not args.out and not args.csv:
        print(json.dumps(report, indent=2, sort_keys=True))


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _gather_config(args)
    factory = make_backend_factory(cfg)
    report = evaluate(args.dataset, cfg.grid, cfg.style, factory,
                      _eval_options(cfg, args.limit))
    _emit_report(report, args)
    return _report_exit_code(report)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _gather_config(args)
    grids = [g.strip() for g in args.grids.split(",") if g.strip()]
    styles = [s.strip() for s in args.styles.split(",") if s.strip()]
    for g in grids:
        parse_grid(g)
    factory = make_backend_factory(cfg)
    report = sweep(args.dataset, grids, styles, factory,
                   _eval_options(cfg, args.limit))
    _emit_report(report, args)
    return _report_exit_code(report)


def _parse_range(text: str, kind: type) -> tuple:
    try:
        lo, _, hi = text.partition("-")
        return kind(lo), kind(hi)
    except ValueError:
        raise ValidationError(
            f"expected a range like 3-6, got {text!r}") from None


def cmd_synth(args: argparse.Namespace) -> int:
    n_lo, n_hi = _parse_range(args.tasks, int)
    d_lo, d_hi = _parse_range(args.duration, float)
    w, h = parse_grid(args.frame_size)
    dirs = generate_dataset(
        args.out, args.videos, seed=args.seed, fps=args.fps,
        n_tasks_range=(n_lo, n_hi), duration_range_s=(d_lo, d_hi),
        frame_size=(w, h))
    print(f"generated {len(dirs)} videos under {args.out}")
    return EXIT_OK


def cmd_convert_annotations(args: argparse.Namespace) -> int:
    path = Path(args.input)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    video_id = args.video_id or path.stem
    gt = convert_frame_annotations(text, args.fps, video_id)
    if args.out:
        save_annotations(gt, args.out)
        log.info("wrote %s", args.out)
    else:
        print(json.dumps(gt.to_dict(), indent=2))
    return EXIT_OK


def cmd_dump_grid(args: argparse.Namespace) -> int:
    cfg = _gather_config(args)
    video = open_video(args.video, fps=cfg.fps)
    center = args.center if args.center is not None else video.duration_s / 2
    width = args.width if args.width is not None else video.duration_s
    window = TimeWindow(center, width, video.duration_s)
    rows, cols = parse_grid(cfg.grid)
    spec = spec_for_style(rows, cols, cfg.style, cfg.canvas_px)
    frames = sample_frames(video, window, spec.n_cells)
    grid_image = compose_grid(frames, spec)
    png_path, json_path = render_debug(grid_image, args.out)
    print(f"wrote {png_path} and {json_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpivot",
        description="Localize described tasks in long videos by "
                    "iterative visual prompting of a vision-language model.")
    parser.add_argument("--version", action="version",
                        version=f"tpivot {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="localize tasks in one video")
    p.add_argument("video", help="video file or image directory")
    p.add_argument("--tasks", help="comma-separated task descriptions "
                                   "in order of execution")
    p.add_argument("--annotations", metavar="FILE",
                   help="ground-truth JSON (task source and oracle truth)")
    p.add_argument("--out", metavar="FILE", help="result JSON path")
    p.add_argument("--debug-grids", metavar="DIR",
                   help="dump every composed grid and label map here")
    _add_run_flags(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="score one configuration "
                                        "over a dataset")
    p.add_argument("--dataset", required=True,
                   help="directory of video directories with truth.json")
    p.add_argument("--out", metavar="FILE", help="report JSON path")
    p.add_argument("--csv", metavar="FILE", help="report CSV path")
    p.add_argument("--limit", type=int, help="evaluate only the first N videos")
    _add_run_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="score grid/style combinations "
                                     "over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--grids", default="2x2,3x3,4x4,5x5,6x6",
                   help="comma-separated grid sizes")
    p.add_argument("--styles", default="original",
                   help="comma-separated style presets")
    p.add_argument("--out", metavar="FILE", help="report JSON path")
    p.add_argument("--csv", metavar="FILE", help="report CSV path")
    p.add_argument("--limit", type=int)
    _add_run_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--tasks", default="3-6", help="tasks per video, e.g. 3-6")
    p.add_argument("--duration", default="10-12.5",
                   help="video length range in seconds, e.g. 10-12.5")
    p.add_argument("--frame-size", default="160x120",
                   help="frame size as WxH pixels")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert-annotations",
                       help="convert frame-span annotation text to JSON")
    p.add_argument("input", help="text file of '1-744 label' lines")
    p.add_argument("--fps", type=float, required=True,
                   help="frame rate the spans refer to")
    p.add_argument("--video-id", help="output video id (default: file stem)")
    p.add_argument("--out", metavar="FILE", help="output JSON path")
    p.set_defaults(func=cmd_convert_annotations)

    p = sub.add_parser("dump-grid",
                       help="compose one frame grid for inspection")
    p.add_argument("video", help="video file or image directory")
    p.add_argument("--center", type=float, help="window center (seconds)")
    p.add_argument("--width", type=float, help="window width (seconds)")
    p.add_argument("--out", default="grid_dump",
                   help="output base path (writes .png and .labels.json)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_dump_grid)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except BackendError as exc:
        log.error("backend failure: %s", exc)
        return EXIT_BACKEND
    except TpivotError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
