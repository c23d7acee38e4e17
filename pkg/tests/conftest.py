import json

import pytest
from PIL import Image

from tpivot.annotations import GroundTruthSegmentation, Segment
from tpivot.backends import OracleBackend
from tpivot.synth import segmentation_source


@pytest.fixture
def truth():
    """A fixed 4-task segmentation, 20 s at 10 fps, lattice boundaries."""
    return GroundTruthSegmentation(
        video_id="fixed",
        fps=10.0,
        duration_s=20.0,
        segments=(
            Segment("reach for the cup", 0.0, 3.2),
            Segment("pour the water", 3.2, 9.5),
            Segment("stir the mixture", 9.5, 11.0),
            Segment("wipe the surface", 11.0, 20.0),
        ),
    )


@pytest.fixture
def video(truth):
    return segmentation_source(truth, frame_size=(64, 48))


@pytest.fixture
def oracle(truth):
    return OracleBackend(truth)


@pytest.fixture
def image_dir(tmp_path):
    """A 12-frame image-directory video at 4 fps with a meta sidecar."""
    d = tmp_path / "clip"
    d.mkdir()
    for i in range(12):
        Image.new("RGB", (32, 24), (i * 20 % 256, 30, 60)).save(
            d / f"frame_{i:04d}.png")
    (d / "meta.json").write_text(json.dumps({"fps": 4.0, "video_id": "clip"}))
    return d
