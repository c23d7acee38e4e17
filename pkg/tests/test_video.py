import json
import shutil

import pytest
from hypothesis import given, strategies as st
from PIL import Image

from tpivot.errors import FrameRangeError, VideoError
from tpivot.video import (
    FunctionVideoSource,
    ImageDirectorySource,
    open_video,
)


def test_image_directory_metadata(image_dir):
    src = ImageDirectorySource(image_dir)
    assert src.video_id == "clip"
    assert src.fps == 4.0
    assert src.frame_count == 12
    assert src.duration_s == pytest.approx(3.0)


def test_frame_count_matches_duration(image_dir):
    src = ImageDirectorySource(image_dir)
    assert abs(src.frame_count - round(src.duration_s * src.fps)) <= 1


def test_frames_ordered_by_filename(image_dir):
    src = ImageDirectorySource(image_dir)
    first = src.frame_at_index(0)
    third = src.frame_at_index(3)
    assert first.getpixel((0, 0))[0] == 0
    assert third.getpixel((0, 0))[0] == 60


def test_fps_override_beats_sidecar(image_dir):
    src = ImageDirectorySource(image_dir, fps=8.0)
    assert src.fps == 8.0
    assert src.duration_s == pytest.approx(1.5)


def test_missing_fps_rejected(tmp_path):
    d = tmp_path / "nofps"
    d.mkdir()
    Image.new("RGB", (8, 8)).save(d / "a.png")
    with pytest.raises(VideoError, match="fps"):
        ImageDirectorySource(d)


def test_empty_directory_rejected(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    with pytest.raises(VideoError, match="no image files"):
        ImageDirectorySource(d)


def test_bad_meta_json_rejected(tmp_path):
    d = tmp_path / "badmeta"
    d.mkdir()
    Image.new("RGB", (8, 8)).save(d / "a.png")
    (d / "meta.json").write_text("{nope")
    with pytest.raises(VideoError, match="unreadable"):
        ImageDirectorySource(d)


def test_frame_at_snaps_to_nearest(image_dir):
    src = ImageDirectorySource(image_dir)
    _, actual = src.frame_at(0.6)
    # 0.6 s * 4 fps = 2.4 -> frame 2 at 0.5 s
    assert actual == pytest.approx(0.5)
    _, actual = src.frame_at(0.65)
    assert actual == pytest.approx(0.75)


def test_frame_at_out_of_range(image_dir):
    src = ImageDirectorySource(image_dir)
    with pytest.raises(FrameRangeError):
        src.frame_at(-0.1)
    with pytest.raises(FrameRangeError):
        src.frame_at(src.duration_s + 0.1)
    with pytest.raises(FrameRangeError):
        src.frame_at_index(src.frame_count)


def test_frame_cache_returns_same_object(image_dir):
    src = ImageDirectorySource(image_dir)
    assert src.frame_at_index(5) is src.frame_at_index(5)


def test_cache_eviction(image_dir):
    src = ImageDirectorySource(image_dir, cache_size=2)
    a = src.frame_at_index(0)
    src.frame_at_index(1)
    src.frame_at_index(2)
    assert src.frame_at_index(0) is not a


@given(st.floats(min_value=0.0, max_value=9.95))
def test_nearest_frame_within_half_period(t):
    src = FunctionVideoSource("f", 10.0, 100,
                              lambda i, ts: Image.new("RGB", (4, 4)))
    _, actual = src.frame_at(t)
    assert abs(actual - t) <= 0.05 + 1e-9


def test_function_source_renders_by_index():
    frames = []

    def render(index, t_s):
        frames.append((index, t_s))
        return Image.new("RGB", (4, 4), (index, 0, 0))

    src = FunctionVideoSource("f", 2.0, 6, render)
    img = src.frame_at_index(3)
    assert img.getpixel((0, 0))[0] == 3
    assert frames == [(3, 1.5)]


def test_open_video_dispatches_directory(image_dir):
    src = open_video(image_dir)
    assert isinstance(src, ImageDirectorySource)


def test_open_video_missing_path(tmp_path):
    with pytest.raises(VideoError, match="no such video"):
        open_video(tmp_path / "nope")


def test_open_video_rejects_fps_for_files(tmp_path):
    f = tmp_path / "v.mp4"
    f.write_bytes(b"not a real video")
    with pytest.raises(VideoError, match="fps override"):
        open_video(f, fps=10.0)


@pytest.mark.skipif(shutil.which("ffmpeg") is not None,
                    reason="ffmpeg installed; error path not reachable")
def test_container_file_without_ffmpeg(tmp_path):
    f = tmp_path / "v.mp4"
    f.write_bytes(b"not a real video")
    with pytest.raises(VideoError, match="PATH"):
        open_video(f)


def test_invalid_source_parameters():
    render = lambda i, t: Image.new("RGB", (4, 4))
    with pytest.raises(VideoError):
        FunctionVideoSource("f", 0.0, 10, render)
    with pytest.raises(VideoError):
        FunctionVideoSource("f", 10.0, 0, render)


def test_meta_without_video_id_uses_dirname(tmp_path):
    d = tmp_path / "mydir"
    d.mkdir()
    Image.new("RGB", (8, 8)).save(d / "a.png")
    (d / "meta.json").write_text(json.dumps({"fps": 2.0}))
    assert ImageDirectorySource(d).video_id == "mydir"
