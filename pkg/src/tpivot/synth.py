"""Synthetic color-coded videos with known segmentations.

Each task segment renders as a distinct solid color with the task name
drawn on it, so both the oracle (which never looks at pixels) and a
real model (which does) can localize the transitions. Boundaries sit
exactly on the frame lattice, which makes convergence measurable down
to the frame period.

Everything is driven by :class:`random.Random` instances seeded by the
caller; a fixed seed reproduces the dataset byte for byte.
"""

from __future__ import annotations

import colorsys
import json
import random
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

from .annotations import GroundTruthSegmentation, Segment, save_annotations
from .errors import ValidationError
from .video import META_FILENAME, FunctionVideoSource, VideoSource

LABEL_POOL = [
    "reach for the cup", "grasp the handle", "pour the water",
    "stir the mixture", "open the drawer", "pick up the spoon",
    "place the plate", "wipe the surface", "close the lid",
    "press the button", "slice the bread", "crack the egg",
    "fold the towel", "screw the cap", "flip the switch",
    "hand over the tool", "shake the bottle", "insert the plug",
]

DEFAULT_FPS = 10.0
DEFAULT_FRAME_SIZE = (160, 120)
TRUTH_FILENAME = "truth.json"
_JPEG_QUALITY = 90


def _task_color(slot: int, hue_offset: float) -> tuple[int, int, int]:
    hue = (hue_offset + slot * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.92)
    return round(r * 255), round(g * 255), round(b * 255)


def random_segmentation(rng: random.Random, video_id: str,
                        fps: float = DEFAULT_FPS,
                        n_tasks_range: tuple[int, int] = (3, 6),
                        duration_range_s: tuple[float, float] = (10.0, 12.5),
                        ) -> GroundTruthSegmentation:
    """Draw a random non-uniform segmentation on the frame lattice.

    Segment lengths vary freely above a minimum, and the result is
    re-drawn if every interior boundary happens to land within one
    frame of the uniform split, so the uniform baseline never ties it.
    """
    n = rng.randint(*n_tasks_range)
    if n > len(LABEL_POOL):
        raise ValidationError(
            f"at most {len(LABEL_POOL)} tasks supported, got {n}")
    duration_s = rng.uniform(*duration_range_s)
    total_frames = max(n * 4, round(duration_s * fps))
    labels = rng.sample(LABEL_POOL, n)
    min_len = max(2, total_frames // (3 * n))
    for _ in range(10):
        free = total_frames - n * min_len
        cuts = sorted(rng.sample(range(1, free), n - 1))
        parts = [b - a for a, b in zip([0, *cuts], [*cuts, free])]
        seg_frames = [min_len + p for p in parts]
        boundaries = []
        acc = 0
        for length in seg_frames[:-1]:
            acc += length
            boundaries.append(acc)
        uniform = [i * total_frames / n for i in range(1, n)]
        if any(abs(b - u) >= 1.0 for b, u in zip(boundaries, uniform)):
            break
    edges = [0, *boundaries, total_frames]
    segments = tuple(
        Segment(labels[i], edges[i] / fps, edges[i + 1] / fps)
        for i in range(n))
    return GroundTruthSegmentation(video_id, fps, total_frames / fps, segments)


def _font_for(height: int) -> ImageFont.ImageFont | ImageFont.FreeTypeFont:
    try:
        return ImageFont.load_default(size=max(10, height // 8))
    except TypeError:
        return ImageFont.load_default()


def segmentation_source(truth: GroundTruthSegmentation,
                        frame_size: tuple[int, int] = DEFAULT_FRAME_SIZE,
                        hue_offset: float = 0.0) -> VideoSource:
    """An in-memory video rendering ``truth`` as colored segments."""
    colors = [_task_color(i, hue_offset) for i in range(len(truth.segments))]
    transitions = truth.transitions
    labels = truth.task_labels
    font = _font_for(frame_size[1])

    def render(index: int, t_s: float) -> Image.Image:
        seg = sum(1 for tr in transitions if tr <= t_s)
        img = Image.new("RGB", frame_size, colors[seg])
        draw = ImageDraw.Draw(img)
        text = labels[seg]
        center = (frame_size[0] / 2, frame_size[1] / 2)
        try:
            draw.text(center, text, fill=(20, 20, 20), font=font,
                      anchor="mm")
        except ValueError:
            draw.text((4, 4), text, fill=(20, 20, 20), font=font)
        draw.text((3, 2), str(index), fill=(20, 20, 20), font=font)
        return img

    frame_count = max(1, round(truth.duration_s * truth.fps))
    return FunctionVideoSource(truth.video_id, truth.fps, frame_count, render)


def write_video_dir(truth: GroundTruthSegmentation, out_dir: str | Path,
                    frame_size: tuple[int, int] = DEFAULT_FRAME_SIZE,
                    hue_offset: float = 0.0) -> Path:
    """Materialize a segmentation as an image-directory video on disk."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = segmentation_source(truth, frame_size, hue_offset)
    for index in range(source.frame_count):
        frame = source.frame_at_index(index)
        frame.save(out_dir / f"frame_{index:05d}.jpg", format="JPEG",
                   quality=_JPEG_QUALITY)
    (out_dir / META_FILENAME).write_text(json.dumps(
        {"fps": truth.fps, "video_id": truth.video_id},
        sort_keys=True) + "\n")
    save_annotations(truth, out_dir / TRUTH_FILENAME)
    return out_dir


def generate_dataset(out_dir: str | Path, n_videos: int, seed: int = 0,
                     fps: float = DEFAULT_FPS,
                     n_tasks_range: tuple[int, int] = (3, 6),
                     duration_range_s: tuple[float, float] = (10.0, 12.5),
                     frame_size: tuple[int, int] = DEFAULT_FRAME_SIZE,
                     ) -> list[Path]:
    """Generate ``n_videos`` videos under ``out_dir``, one directory each.

    Every directory holds the frames, a ``meta.json`` with the frame
    rate, and the ground truth as ``truth.json``. Returns the video
    directories in generation order.
    """
    if n_videos < 1:
        raise ValidationError(f"n_videos must be >= 1, got {n_videos}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dirs = []
    for i in range(n_videos):
        # One independent stream per video, so a video's content depends
        # only on (seed, index), not on how many videos run before it.
        rng = random.Random(seed * 1_000_003 + i)
        truth = random_segmentation(rng, f"synth{i:03d}", fps,
                                    n_tasks_range, duration_range_s)
        hue_offset = rng.random()
        dirs.append(write_video_dir(truth, out_dir / truth.video_id,
                                    frame_size, hue_offset))
    return dirs
