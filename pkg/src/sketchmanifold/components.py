"""Five-way face decomposition: window layout, cropping, remainder erasure,
and depth-ordered recomposition previews.

The four facial windows (left eye, right eye, nose, mouth) are axis-aligned
half-open rectangles that may overlap; the remainder component is the full
canvas with the interiors of those four windows erased to 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, DimensionMismatchError, InvalidInputError
from .raster import SketchRaster


class ComponentKind(Enum):
    """The five face components, in fixed iteration order."""

    LEFT_EYE = 1
    RIGHT_EYE = 2
    NOSE = 3
    MOUTH = 4
    REMAINDER = 5

    @property
    def slug(self) -> str:
        return self.name.lower()


FACIAL_KINDS = (
    ComponentKind.LEFT_EYE,
    ComponentKind.RIGHT_EYE,
    ComponentKind.NOSE,
    ComponentKind.MOUTH,
)

# Merge priority, highest first.  The eyes outrank nose and mouth; the left
# eye wins the (rare) overlap with the right eye so the order is total.
DEPTH_ORDER = (
    ComponentKind.LEFT_EYE,
    ComponentKind.RIGHT_EYE,
    ComponentKind.NOSE,
    ComponentKind.MOUTH,
    ComponentKind.REMAINDER,
)

# Default window geometry as canvas fractions (x0, y0, x1, y1); chosen so
# the nose overlaps both eye windows and the mouth window at any canvas
# size, while staying resolution-independent.
DEFAULT_WINDOW_FRACTIONS = {
    ComponentKind.LEFT_EYE: (0.16, 0.27, 0.47, 0.52),
    ComponentKind.RIGHT_EYE: (0.53, 0.27, 0.84, 0.52),
    ComponentKind.NOSE: (0.36, 0.42, 0.64, 0.72),
    ComponentKind.MOUTH: (0.31, 0.66, 0.69, 0.87),
}

DEFAULT_CANVAS = 64


@dataclass(frozen=True)
class ComponentLayout:
    """Pixel windows for the four facial components on a fixed canvas.

    Windows are half-open: a window (x0, y0, x1, y1) contains pixel (x, y)
    iff x0 <= x < x1 and y0 <= y < y1.  The remainder implicitly covers the
    whole canvas.
    """

    width: int
    height: int
    windows: dict[ComponentKind, tuple[int, int, int, int]]

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("canvas dimensions must be positive")
        if set(self.windows) != set(FACIAL_KINDS):
            raise InvalidInputError("layout requires exactly the four facial windows")
        for kind, (x0, y0, x1, y1) in self.windows.items():
            if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                raise InvalidInputError(
                    f"{kind.slug} window {(x0, y0, x1, y1)} outside "
                    f"{self.width}x{self.height} canvas"
                )
        object.__setattr__(self, "windows", dict(self.windows))

    def window(self, kind: ComponentKind) -> tuple[int, int, int, int]:
        """Window of ``kind``; the remainder maps to the full canvas."""
        if kind is ComponentKind.REMAINDER:
            return (0, 0, self.width, self.height)
        return self.windows[kind]

    def window_shape(self, kind: ComponentKind) -> tuple[int, int]:
        x0, y0, x1, y1 = self.window(kind)
        return (y1 - y0, x1 - x0)

    @classmethod
    def default(cls, width: int = DEFAULT_CANVAS, height: int = DEFAULT_CANVAS) -> "ComponentLayout":
        windows = {}
        for kind, (fx0, fy0, fx1, fy1) in DEFAULT_WINDOW_FRACTIONS.items():
            windows[kind] = (
                int(np.floor(fx0 * width + 0.5)),
                int(np.floor(fy0 * height + 0.5)),
                int(np.floor(fx1 * width + 0.5)),
                int(np.floor(fy1 * height + 0.5)),
            )
        return cls(width=width, height=height, windows=windows)


@dataclass(frozen=True)
class ComponentCrop:
    """One component's raster, sized to its layout window."""

    kind: ComponentKind
    raster: SketchRaster


@dataclass(frozen=True)
class FaceSketchDecomposition:
    """Exactly five crops, one per component kind, plus their layout."""

    layout: ComponentLayout
    crops: dict[ComponentKind, ComponentCrop]

    def __post_init__(self):
        if set(self.crops) != set(ComponentKind):
            raise InvalidInputError("decomposition requires all five components")
        for kind, crop in self.crops.items():
            if crop.kind is not kind:
                raise InvalidInputError(f"crop filed under {kind} is tagged {crop.kind}")
            expected = self.layout.window_shape(kind)
            got = (crop.raster.height, crop.raster.width)
            if got != expected:
                raise DimensionMismatchError(
                    f"{kind.slug} crop is {got}, window wants {expected}"
                )
        object.__setattr__(self, "crops", dict(self.crops))

    def crop(self, kind: ComponentKind) -> ComponentCrop:
        return self.crops[kind]


def decompose(sketch: SketchRaster, layout: ComponentLayout) -> FaceSketchDecomposition:
    """Split a sketch into four window crops plus the erased remainder.

    The facial crops are exact pixel copies of their windows; the remainder
    equals the input with every pixel strictly inside any facial window set
    to 0 (no feathering).
    """
    if (sketch.height, sketch.width) != (layout.height, layout.width):
        raise DimensionMismatchError(
            f"sketch {sketch.height}x{sketch.width} does not match layout "
            f"{layout.height}x{layout.width}"
        )
    crops: dict[ComponentKind, ComponentCrop] = {}
    remainder = np.array(sketch.ink)
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        crops[kind] = ComponentCrop(kind, SketchRaster(sketch.ink[y0:y1, x0:x1]))
        remainder[y0:y1, x0:x1] = 0.0
    crops[ComponentKind.REMAINDER] = ComponentCrop(
        ComponentKind.REMAINDER, SketchRaster(remainder)
    )
    return FaceSketchDecomposition(layout=layout, crops=crops)


def compose_preview(decomposition: FaceSketchDecomposition) -> SketchRaster:
    """Reassemble crops onto one canvas under the fixed depth order.

    Each pixel takes the value of the highest-priority component whose
    window contains it; painting in reverse priority makes the winner land
    last, so the result is independent of crop storage order.
    """
    layout = decomposition.layout
    canvas = np.array(decomposition.crop(ComponentKind.REMAINDER).raster.ink)
    for kind in reversed(DEPTH_ORDER[:-1]):
        x0, y0, x1, y1 = layout.window(kind)
        canvas[y0:y1, x0:x1] = decomposition.crop(kind).raster.ink
    return SketchRaster(canvas)


def save_layout(layout: ComponentLayout, path: str | Path) -> None:
    """Serialize as a UTF-8 key/value record, one window per line."""
    lines = [f"canvas={layout.width}x{layout.height}"]
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        lines.append(f"{kind.slug}={x0},{y0},{x1},{y1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_layout(path: str | Path) -> ComponentLayout:
    fields: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        width, height = (int(v) for v in fields["canvas"].split("x"))
        windows = {}
        for kind in FACIAL_KINDS:
            x0, y0, x1, y1 = (int(v) for v in fields[kind.slug].split(","))
            windows[kind] = (x0, y0, x1, y1)
    except (KeyError, ValueError) as exc:
        raise CorruptFileError(f"malformed layout file {path}: {exc}") from exc
    return ComponentLayout(width=width, height=height, windows=windows)
