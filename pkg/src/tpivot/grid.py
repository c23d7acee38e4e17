"""Composition of sampled frames into annotated grid images.

The model is shown one image per query: a tiled grid of frames in
temporal order, each stamped with a numbered marker. The number is the
only handle the model has to refer to a frame, so the mapping from
numbers to timestamps (the label map) is part of the grid object and
travels with it.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

from .errors import ValidationError

ANNOTATION_STYLES = ("corner_circle", "center_circle")

# Named presets exposed on the CLI: marker placement plus cell spacing
# as a fraction of cell width.
STYLE_PRESETS: dict[str, tuple[str, float]] = {
    "original": ("corner_circle", 0.0),
    "center": ("center_circle", 0.0),
    "spacing": ("corner_circle", 0.02),
}

DEFAULT_CANVAS_PX = 2048
JPEG_QUALITY = 85
_BACKGROUND = (14, 14, 14)
_CIRCLE_FILL = (10, 10, 10)
_CIRCLE_OUTLINE = (235, 235, 235)
_NUMBER_COLOR = (255, 255, 255)


@dataclass(frozen=True)
class GridSpec:
    """Geometry and annotation style of a frame grid."""

    rows: int
    cols: int
    cell_px: tuple[int, int]
    annotation_style: str = "corner_circle"
    spacing_px: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError(
                f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        w, h = self.cell_px
        if w < 8 or h < 8:
            raise ValidationError(f"cell_px too small: {self.cell_px}")
        if self.annotation_style not in ANNOTATION_STYLES:
            raise ValidationError(
                f"annotation_style must be one of {ANNOTATION_STYLES}, "
                f"got {self.annotation_style!r}")
        if self.spacing_px < 0:
            raise ValidationError(
                f"spacing_px must be >= 0, got {self.spacing_px}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def output_px(self) -> tuple[int, int]:
        w, h = self.cell_px
        return (self.cols * w + (self.cols - 1) * self.spacing_px,
                self.rows * h + (self.rows - 1) * self.spacing_px)


def parse_grid(text: str) -> tuple[int, int]:
    """Parse a grid size like ``"5x5"`` into (rows, cols)."""
    try:
        rows_str, cols_str = text.lower().split("x")
        rows, cols = int(rows_str), int(cols_str)
    except ValueError:
        raise ValidationError(
            f"grid must look like '5x5', got {text!r}") from None
    if rows < 1 or cols < 1:
        raise ValidationError(f"grid sides must be positive, got {text!r}")
    return rows, cols


def spec_for_style(rows: int, cols: int, style: str = "original",
                   canvas_px: int = DEFAULT_CANVAS_PX) -> GridSpec:
    """Build a :class:`GridSpec` from a named style preset.

    Square cells are sized so the longest side of the composed image
    does not exceed ``canvas_px``.
    """
    if style not in STYLE_PRESETS:
        raise ValidationError(
            f"style must be one of {sorted(STYLE_PRESETS)}, got {style!r}")
    annotation_style, spacing_frac = STYLE_PRESETS[style]
    k = max(rows, cols)
    cell = canvas_px // k
    spacing = round(spacing_frac * cell)
    if spacing:
        cell = (canvas_px - (k - 1) * spacing) // k
    return GridSpec(rows, cols, (cell, cell), annotation_style, spacing)


@dataclass
class FrameGrid:
    """A composed grid image plus its number-to-timestamp label map."""

    image: Image.Image
    label_map: dict[int, float]
    spec: GridSpec = field(repr=False)

    def __post_init__(self):
        labels = sorted(self.label_map)
        if labels != list(range(1, len(labels) + 1)):
            raise ValidationError(
                f"label_map keys must be 1..N, got {labels}")
        times = [self.label_map[n] for n in labels]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(
                "label_map timestamps must be strictly increasing")

    @property
    def labels(self) -> list[int]:
        return sorted(self.label_map)

    def time_of(self, label: int) -> float:
        return self.label_map[label]

    def to_jpeg_bytes(self, quality: int = JPEG_QUALITY) -> bytes:
        buf = io.BytesIO()
        self.image.convert("RGB").save(buf, format="JPEG", quality=quality)
        return buf.getvalue()


def letterbox_fit(frame: Image.Image, cell_px: tuple[int, int],
                  fill: tuple[int, int, int] = _BACKGROUND) -> Image.Image:
    """Scale ``frame`` to fit the cell, preserving aspect, and pad."""
    cw, ch = cell_px
    fw, fh = frame.size
    scale = min(cw / fw, ch / fh)
    new_w = max(1, round(fw * scale))
    new_h = max(1, round(fh * scale))
    resized = frame.resize((new_w, new_h), Image.BILINEAR)
    cell = Image.new("RGB", (cw, ch), fill)
    cell.paste(resized, ((cw - new_w) // 2, (ch - new_h) // 2))
    return cell


def _load_font(size: int) -> ImageFont.ImageFont | ImageFont.FreeTypeFont:
    try:
        return ImageFont.load_default(size=size)
    except TypeError:  # very old Pillow without the size argument
        return ImageFont.load_default()


def _draw_marker(cell: Image.Image, number: int, spec: GridSpec) -> None:
    cw, ch = spec.cell_px
    diameter = max(10, round(0.12 * ch))
    if spec.annotation_style == "corner_circle":
        inset = round(0.02 * cw)
        x0, y0 = inset, inset
    else:
        x0 = (cw - diameter) // 2
        y0 = (ch - diameter) // 2
    draw = ImageDraw.Draw(cell)
    draw.ellipse([x0, y0, x0 + diameter, y0 + diameter],
                 fill=_CIRCLE_FILL, outline=_CIRCLE_OUTLINE, width=1)
    font = _load_font(max(8, round(diameter * 0.62)))
    center = (x0 + diameter / 2, y0 + diameter / 2)
    try:
        draw.text(center, str(number), fill=_NUMBER_COLOR, font=font,
                  anchor="mm")
    except ValueError:
        # Bitmap fallback fonts reject anchors; approximate by offset.
        tw, th = draw.textbbox((0, 0), str(number), font=font)[2:]
        draw.text((center[0] - tw / 2, center[1] - th / 2), str(number),
                  fill=_NUMBER_COLOR, font=font)


def compose_grid(frames: list[tuple[Image.Image, float]],
                 spec: GridSpec) -> FrameGrid:
    """Tile timestamped frames row-major into one annotated image.

    ``frames`` must be in strictly increasing time order and contain at
    most ``spec.n_cells`` entries; trailing cells stay background when
    there are fewer (short videos near frame-level resolution).
    """
    if not frames:
        raise ValidationError("compose_grid needs at least one frame")
    if len(frames) > spec.n_cells:
        raise ValidationError(
            f"{len(frames)} frames do not fit a {spec.rows}x{spec.cols} grid")
    times = [t for _, t in frames]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("frame timestamps must be strictly increasing")

    canvas = Image.new("RGB", spec.output_px, _BACKGROUND)
    cw, ch = spec.cell_px
    label_map: dict[int, float] = {}
    for i, (frame, t_s) in enumerate(frames):
        number = i + 1
        cell = letterbox_fit(frame, spec.cell_px)
        _draw_marker(cell, number, spec)
        row, col = divmod(i, spec.cols)
        canvas.paste(cell, (col * (cw + spec.spacing_px),
                            row * (ch + spec.spacing_px)))
        label_map[number] = t_s
    return FrameGrid(canvas, label_map, spec)


def render_debug(grid: FrameGrid, out_base: str | Path) -> tuple[Path, Path]:
    """Write the grid as PNG plus a JSON sidecar with the label map."""
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    png_path = out_base.with_suffix(".png")
    json_path = out_base.with_suffix(".labels.json")
    grid.image.save(png_path, format="PNG")
    json_path.write_text(json.dumps(
        {str(n): t for n, t in sorted(grid.label_map.items())},
        indent=2) + "\n")
    return png_path, json_path
