"""Video sources with timestamp-addressed frame access.

Long recordings are addressed by time, not by frame index: the search
loop asks for "the frame nearest t seconds" and needs to know which
timestamp it actually received. Three concrete sources cover the use
cases:

* :class:`ImageDirectorySource` reads a directory of per-frame images
  with an ``meta.json`` sidecar carrying the frame rate. This is the
  hermetic path used by tests and the synthetic datasets.
* :class:`FfmpegVideoSource` shells out to ffmpeg/ffprobe for container
  formats (mp4, avi, ...). It requires the binaries on PATH.
* :class:`FunctionVideoSource` renders frames from a callback and backs
  the synthetic generator without touching disk.

All sources share nearest-frame snapping (``index = round(t * fps)``)
and an LRU decode cache so the iterative search does not decode the
same frame twice.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import threading
from abc import ABC, abstractmethod
from collections import OrderedDict
from pathlib import Path
from typing import Callable

from PIL import Image

from .errors import FrameRangeError, VideoError

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp"}
META_FILENAME = "meta.json"
_DEFAULT_CACHE_SIZE = 256


class VideoSource(ABC):
    """Time-addressed access to the frames of one video.

    Subclasses implement :meth:`_decode` for random access by frame
    index; this base class provides timestamp snapping, bounds checks,
    and a thread-safe LRU cache over decoded frames.
    """

    def __init__(self, video_id: str, fps: float, frame_count: int,
                 cache_size: int = _DEFAULT_CACHE_SIZE):
        if fps <= 0:
            raise VideoError(f"fps must be positive, got {fps}")
        if frame_count <= 0:
            raise VideoError(f"frame_count must be positive, got {frame_count}")
        self.video_id = video_id
        self.fps = float(fps)
        self.frame_count = int(frame_count)
        self._cache: OrderedDict[int, Image.Image] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def duration_s(self) -> float:
        return self.frame_count / self.fps

    @abstractmethod
    def _decode(self, index: int) -> Image.Image:
        """Decode the frame at ``index``. Called under the cache lock miss."""

    def nearest_frame_index(self, t_s: float) -> int:
        """Map a timestamp to the nearest frame index, clamped to range."""
        if not (0.0 <= t_s <= self.duration_s):
            raise FrameRangeError(
                f"{self.video_id}: t={t_s:.3f}s outside [0, {self.duration_s:.3f}]")
        index = round(t_s * self.fps)
        return min(max(index, 0), self.frame_count - 1)

    def frame_at_index(self, index: int) -> Image.Image:
        if not (0 <= index < self.frame_count):
            raise FrameRangeError(
                f"{self.video_id}: frame {index} outside [0, {self.frame_count})")
        with self._lock:
            if index in self._cache:
                self._cache.move_to_end(index)
                return self._cache[index]
        frame = self._decode(index)
        with self._lock:
            self._cache[index] = frame
            self._cache.move_to_end(index)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return frame

    def frame_at(self, t_s: float) -> tuple[Image.Image, float]:
        """Return ``(frame, actual_time_s)`` for the frame nearest ``t_s``."""
        index = self.nearest_frame_index(t_s)
        return self.frame_at_index(index), index / self.fps

    def frame_time(self, index: int) -> float:
        return index / self.fps

    def __repr__(self) -> str:
        return (f"{type(self).__name__}(video_id={self.video_id!r}, "
                f"fps={self.fps}, frames={self.frame_count})")


class ImageDirectorySource(VideoSource):
    """A directory of image files, one per frame, ordered by filename.

    The frame rate comes from a ``meta.json`` sidecar in the directory
    ({"fps": ...}) unless overridden by the ``fps`` argument.
    """

    def __init__(self, directory: str | Path, fps: float | None = None,
                 cache_size: int = _DEFAULT_CACHE_SIZE):
        directory = Path(directory)
        if not directory.is_dir():
            raise VideoError(f"not a directory: {directory}")
        self._paths = sorted(
            p for p in directory.iterdir()
            if p.suffix.lower() in IMAGE_EXTENSIONS)
        if not self._paths:
            raise VideoError(f"no image files in {directory}")
        meta = {}
        meta_path = directory / META_FILENAME
        if meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text())
            except json.JSONDecodeError as exc:
                raise VideoError(f"unreadable {meta_path}: {exc}") from exc
        if fps is None:
            fps = meta.get("fps")
        if fps is None:
            raise VideoError(
                f"{directory}: no fps given and no 'fps' key in {META_FILENAME}")
        video_id = meta.get("video_id", directory.name)
        super().__init__(video_id, float(fps), len(self._paths), cache_size)
        self.directory = directory

    def _decode(self, index: int) -> Image.Image:
        with Image.open(self._paths[index]) as img:
            return img.convert("RGB")


class FfmpegVideoSource(VideoSource):
    """Container-format video decoded through the ffmpeg binaries.

    Metadata comes from ffprobe; individual frames are decoded on demand
    with ``ffmpeg -ss``. Decoding one frame at a time keeps memory flat
    for hour-long inputs at the cost of repeated seeks, which the LRU
    cache mostly hides for the access pattern of the iterative search.
    """

    def __init__(self, path: str | Path, cache_size: int = _DEFAULT_CACHE_SIZE):
        path = Path(path)
        if not path.is_file():
            raise VideoError(f"not a file: {path}")
        if shutil.which("ffprobe") is None or shutil.which("ffmpeg") is None:
            raise VideoError(
                "ffmpeg/ffprobe not found on PATH; needed for container formats. "
                "Extract frames to an image directory as an alternative.")
        fps, duration_s = self._probe(path)
        frame_count = max(1, round(duration_s * fps))
        super().__init__(path.stem, fps, frame_count, cache_size)
        self.path = path

    @staticmethod
    def _probe(path: Path) -> tuple[float, float]:
        cmd = [
            "ffprobe", "-v", "error", "-select_streams", "v:0",
            "-show_entries", "stream=avg_frame_rate:format=duration",
            "-of", "json", str(path),
        ]
        try:
            out = subprocess.run(cmd, capture_output=True, text=True,
                                 check=True, timeout=60).stdout
        except (subprocess.CalledProcessError, subprocess.TimeoutExpired) as exc:
            raise VideoError(f"ffprobe failed on {path}: {exc}") from exc
        info = json.loads(out)
        try:
            rate = info["streams"][0]["avg_frame_rate"]
            num, _, den = rate.partition("/")
            fps = float(num) / float(den or 1)
            duration_s = float(info["format"]["duration"])
        except (KeyError, IndexError, ValueError, ZeroDivisionError) as exc:
            raise VideoError(f"could not read metadata from {path}") from exc
        if fps <= 0 or duration_s <= 0:
            raise VideoError(f"bad metadata for {path}: fps={fps}, "
                             f"duration={duration_s}")
        return fps, duration_s

    def _decode(self, index: int) -> Image.Image:
        t_s = index / self.fps
        cmd = [
            "ffmpeg", "-v", "error", "-ss", f"{t_s:.6f}", "-i", str(self.path),
            "-frames:v", "1", "-f", "image2pipe", "-vcodec", "png", "-",
        ]
        try:
            out = subprocess.run(cmd, capture_output=True, check=True,
                                 timeout=120).stdout
        except (subprocess.CalledProcessError, subprocess.TimeoutExpired) as exc:
            raise VideoError(
                f"ffmpeg failed decoding frame {index} of {self.path}") from exc
        if not out:
            raise VideoError(f"ffmpeg produced no data for frame {index} "
                             f"of {self.path}")
        import io
        with Image.open(io.BytesIO(out)) as img:
            return img.convert("RGB")


class FunctionVideoSource(VideoSource):
    """Frames rendered on demand by ``render(index, t_s) -> Image``."""

    def __init__(self, video_id: str, fps: float, frame_count: int,
                 render: Callable[[int, float], Image.Image],
                 cache_size: int = _DEFAULT_CACHE_SIZE):
        super().__init__(video_id, fps, frame_count, cache_size)
        self._render = render

    def _decode(self, index: int) -> Image.Image:
        return self._render(index, index / self.fps)


def open_video(path: str | Path, fps: float | None = None) -> VideoSource:
    """Open a video path as the appropriate :class:`VideoSource`.

    Directories become :class:`ImageDirectorySource`; files go through
    ffmpeg. ``fps`` overrides (or supplies) the frame rate for image
    directories and is rejected for container files, whose metadata is
    authoritative.
    """
    path = Path(path)
    if path.is_dir():
        return ImageDirectorySource(path, fps=fps)
    if path.is_file():
        if fps is not None:
            raise VideoError(
                "fps override is only supported for image directories")
        return FfmpegVideoSource(path)
    raise VideoError(f"no such video: {path}")
