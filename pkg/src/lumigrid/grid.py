"""8x8 RGB button grid: frame model, RGB-X text grammar, rendering, sampling.

A frame is 64 button colors addressed by a single coordinate x in [0, 63]
(row-major: row = x // 8 from the top, column = x % 8 from the left).  Frames
travel as text in the tuple grammar "(r, g, b, x)" and as 128x128 raster
images (16x16 pixel cells, each button a 14x14 square inset one pixel).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

GRID_BUTTONS = 64
GRID_SIDE = 8
IMAGE_SIZE = 128
CELL_SIZE = 16
BUTTON_INSET = 1
SAMPLE_PATCH = 6  # central patch read back per cell, safely inside the button square

_TUPLE_RE = re.compile(
    r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)"
)


class GridError(ValueError):
    """Invalid grid data (bad color channel, coordinate, or image size)."""


@dataclass(frozen=True)
class ButtonColor:
    """One button's RGB color, each channel an integer in [0, 255]."""

    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not (0 <= v <= 255):
                raise GridError(f"channel {name}={v} outside [0, 255]")

    @property
    def is_black(self) -> bool:
        return self.r == 0 and self.g == 0 and self.b == 0


BLACK = ButtonColor(0, 0, 0)


@dataclass(frozen=True)
class RgbXTuple:
    """A button color plus its grid coordinate x in [0, 63]."""

    color: ButtonColor
    x: int

    def __post_init__(self):
        if not (0 <= self.x < GRID_BUTTONS):
            raise GridError(f"coordinate x={self.x} outside [0, 63]")


class LaunchpadFrame:
    """Immutable colors of all 64 buttons; unlit buttons are (0, 0, 0).

    Backed by a read-only (64, 3) uint8 array; position i holds the color of
    coordinate x = i.
    """

    __slots__ = ("_buttons",)

    def __init__(self, buttons):
        arr = np.asarray(buttons)
        if arr.shape != (GRID_BUTTONS, 3):
            raise GridError(f"frame needs shape (64, 3), got {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any((arr < 0) | (arr > 255)):
                raise GridError("channel value outside [0, 255]")
            arr = arr.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        self._buttons = arr

    @classmethod
    def black(cls) -> "LaunchpadFrame":
        return cls(np.zeros((GRID_BUTTONS, 3), dtype=np.uint8))

    @property
    def buttons(self) -> np.ndarray:
        """Read-only (64, 3) uint8 view."""
        return self._buttons

    def button(self, x: int) -> ButtonColor:
        r, g, b = self._buttons[x]
        return ButtonColor(int(r), int(g), int(b))

    def lit_count(self) -> int:
        return int(np.count_nonzero(self._buttons.any(axis=1)))

    def __eq__(self, other):
        if not isinstance(other, LaunchpadFrame):
            return NotImplemented
        return np.array_equal(self._buttons, other._buttons)

    def __hash__(self):
        return hash(self._buttons.tobytes())

    def __repr__(self):
        return f"LaunchpadFrame(lit={self.lit_count()})"


@dataclass
class FrameSequence:
    """Ordered frames plus their playback rate in Hz."""

    frames: list[LaunchpadFrame]
    fps: float

    def __post_init__(self):
        if not self.frames:
            raise GridError("frame sequence must be non-empty")
        if self.fps <= 0:
            raise GridError(f"fps must be positive, got {self.fps}")

    def __len__(self):
        return len(self.frames)

    def to_array(self) -> np.ndarray:
        """(n_frames, 64, 3) uint8 stack."""
        return np.stack([f.buttons for f in self.frames])


@dataclass
class ParseReport:
    """Outcome of scanning text for RGB-X tuples.

    ``tuples`` holds the range-valid matches in textual order (duplicate
    coordinates included); ``malformed_count`` counts grammar matches whose
    values fall outside the channel/coordinate ranges; ``duplicate_count``
    counts tuples whose coordinate already appeared earlier in the text.
    """

    tuples: list[RgbXTuple] = field(default_factory=list)
    malformed_count: int = 0
    duplicate_count: int = 0


def serialize_frame(frame: LaunchpadFrame, mode: str = "sparse") -> str:
    """Render a frame as RGB-X tuple text.

    ``sparse`` (the default) emits only non-black buttons in ascending x and
    yields "" for an all-black frame; ``dense`` emits all 64 tuples.  Each
    tuple is formatted exactly as "(r, g, b, x)", joined by ", ".
    """
    if mode not in ("sparse", "dense"):
        raise GridError(f"unknown serialization mode {mode!r}")
    buttons = frame.buttons
    if mode == "sparse":
        xs = np.flatnonzero(buttons.any(axis=1))
    else:
        xs = range(GRID_BUTTONS)
    parts = []
    for x in xs:
        r, g, b = buttons[x]
        parts.append(f"({r}, {g}, {b}, {x})")
    return ", ".join(parts)


def parse_rgbx_text(text: str) -> ParseReport:
    """Scan arbitrary text (including model garbage) for RGB-X tuples.

    Never raises: substrings matching "(int, int, int, int)" with flexible
    whitespace are extracted; matches with a channel outside [0, 255] or a
    coordinate outside [0, 63] are counted malformed and dropped.
    """
    report = ParseReport()
    seen: set[int] = set()
    for m in _TUPLE_RE.finditer(text):
        r, g, b, x = (int(v) for v in m.groups())
        if not (0 <= r <= 255 and 0 <= g <= 255 and 0 <= b <= 255 and 0 <= x < GRID_BUTTONS):
            report.malformed_count += 1
            continue
        if x in seen:
            report.duplicate_count += 1
        seen.add(x)
        report.tuples.append(RgbXTuple(ButtonColor(r, g, b), x))
    return report


def frame_from_tuples(tuples) -> LaunchpadFrame:
    """Assemble a frame; unmentioned buttons stay black, last write wins."""
    buttons = np.zeros((GRID_BUTTONS, 3), dtype=np.uint8)
    for t in tuples:
        buttons[t.x] = (t.color.r, t.color.g, t.color.b)
    return LaunchpadFrame(buttons)


def _cell_mask() -> np.ndarray:
    mask = np.zeros((CELL_SIZE, CELL_SIZE), dtype=bool)
    mask[BUTTON_INSET:CELL_SIZE - BUTTON_INSET, BUTTON_INSET:CELL_SIZE - BUTTON_INSET] = True
    return np.tile(mask, (GRID_SIDE, GRID_SIDE))


_BUTTON_MASK = _cell_mask()


def render_frame(frame: LaunchpadFrame) -> np.ndarray:
    """Draw a frame as a 128x128 RGB uint8 image.

    Each button fills a 14x14 square inset one pixel inside its 16x16 cell;
    the one-pixel gaps and the background are black.
    """
    grid = frame.buttons.reshape(GRID_SIDE, GRID_SIDE, 3)
    image = np.repeat(np.repeat(grid, CELL_SIZE, axis=0), CELL_SIZE, axis=1)
    image[~_BUTTON_MASK] = 0
    return image


def sample_frame_from_image(image: np.ndarray) -> LaunchpadFrame:
    """Read button colors back from a 128x128 RGB image.

    Each button color is the mean of the central 6x6 pixel patch of its cell,
    rounded to the nearest integer (halves round up).  The patch sits fully
    inside the rendered 14x14 square, so render -> sample is exact; on real
    footage it tolerates a pixel of edge blur.
    """
    image = np.asarray(image)
    if image.shape != (IMAGE_SIZE, IMAGE_SIZE, 3):
        raise GridError(f"expected a 128x128 RGB image, got shape {image.shape}")
    lo = (CELL_SIZE - SAMPLE_PATCH) // 2
    hi = lo + SAMPLE_PATCH
    cells = image.reshape(GRID_SIDE, CELL_SIZE, GRID_SIDE, CELL_SIZE, 3)
    patches = cells[:, lo:hi, :, lo:hi, :].astype(np.float64)
    means = patches.mean(axis=(1, 3))  # (8, 8, 3)
    buttons = np.floor(means + 0.5).astype(np.uint8).reshape(GRID_BUTTONS, 3)
    return LaunchpadFrame(buttons)
