"""Deterministic procedural face-sketch generator and corpus directory I/O.

Each face is produced as a stroke program (polylines with widths) that is
rasterized with the shared anti-aliased drawing code.  Keeping the program
around lets the interactive service replay a corpus sample stroke by
stroke and land on the bit-identical raster, since draw strokes composite
by per-pixel max and quantization commutes with max.

Corpus directory layout: ``NNNN.pgm`` plus ``layout.txt`` and ``tags.txt``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import draw
from .components import ComponentKind, ComponentLayout, load_layout, save_layout
from .errors import InvalidInputError
from .raster import SketchRaster, quantize_ink, read_pgm, write_pgm


@dataclass(frozen=True)
class SyntheticStyle:
    """Tunable knobs of the generator; part of its determinism contract."""

    stroke_width: float = 1.5
    jitter: float = 1.0          # scales all random geometric variation
    hair_strokes: int = 6        # mean number of hair arcs
    iris_detail: bool = True


@dataclass(frozen=True)
class Stroke:
    points: np.ndarray  # (n, 2) float64 pixel coordinates
    width: float


def _window_box(layout: ComponentLayout, kind: ComponentKind, margin: float):
    x0, y0, x1, y1 = layout.window(kind)
    return (x0 + margin, y0 + margin, x1 - 1 - margin, y1 - 1 - margin)


def _clip(points: np.ndarray, width: int, height: int) -> np.ndarray:
    pts = np.array(points, dtype=np.float64)
    pts[:, 0] = np.clip(pts[:, 0], 0.0, width - 1.0)
    pts[:, 1] = np.clip(pts[:, 1], 0.0, height - 1.0)
    return pts


def face_tag(seed: int, style: SyntheticStyle = SyntheticStyle()) -> str:
    """Corpus partition label, derived from the same draw as the geometry."""
    rng = np.random.default_rng(seed)
    frx = rng.uniform(0.34, 0.46)
    return "wide" if frx >= 0.40 else "narrow"


def face_stroke_program(
    seed: int,
    layout: ComponentLayout,
    style: SyntheticStyle = SyntheticStyle(),
) -> list[Stroke]:
    """Build the deterministic stroke list for one synthetic face.

    Feature strokes are confined to their layout windows (eyes with brows,
    nose polyline, mouth curves); outline and hair land in the remainder.
    The nose window always receives ink.
    """
    rng = np.random.default_rng(seed)
    W, H = layout.width, layout.height
    j = style.jitter
    width_of = lambda scale=1.0: style.stroke_width * scale * rng.uniform(0.9, 1.1)
    strokes: list[Stroke] = []

    def add(points: np.ndarray, width: float):
        strokes.append(Stroke(points=_clip(points, W, H), width=width))

    # Face outline; its x-radius fraction also decides the corpus tag.
    frx = rng.uniform(0.34, 0.46)
    cx = W / 2 + rng.normal(0, 0.6 * j)
    cy = H * 0.52 + rng.normal(0, 0.6 * j)
    rx = frx * W
    ry = H * rng.uniform(0.40, 0.46)
    add(draw.ellipse_points(cx, cy, rx, ry, segments=96), width_of())

    # Eyes and brows, one per eye window.
    for kind in (ComponentKind.LEFT_EYE, ComponentKind.RIGHT_EYE):
        bx0, by0, bx1, by1 = _window_box(layout, kind, margin=1.5)
        ecx = (bx0 + bx1) / 2 + rng.normal(0, 0.5 * j)
        ecy = (by0 + by1) * 0.56 + rng.normal(0, 0.4 * j)
        erx = (bx1 - bx0) * rng.uniform(0.26, 0.36)
        ery = (by1 - by0) * rng.uniform(0.14, 0.22)
        add(draw.ellipse_points(ecx, ecy, erx, ery, segments=40), width_of(0.8))
        if style.iris_detail:
            irx = ery * rng.uniform(0.45, 0.7)
            add(draw.ellipse_points(ecx, ecy, irx, irx, segments=20), width_of(0.7))
        # Brow arc along the top of the window.
        bw = (bx1 - bx0) * rng.uniform(0.30, 0.42)
        blift = (by1 - by0) * rng.uniform(0.10, 0.2)
        byc = by0 + (by1 - by0) * 0.18
        t = np.linspace(-1.0, 1.0, 9)
        brow = np.column_stack([ecx + t * bw, byc + blift * t * t])
        add(brow, width_of(0.9))

    # Nose: bridge polyline plus nostril arc, inside the nose window.
    nx0, ny0, nx1, ny1 = _window_box(layout, ComponentKind.NOSE, margin=1.5)
    ntipx = (nx0 + nx1) / 2 + rng.normal(0, 0.8 * j)
    bend = rng.uniform(-0.12, 0.12) * (nx1 - nx0)
    bridge = np.array(
        [
            [ntipx - bend, ny0],
            [ntipx - bend * 0.2, (ny0 + ny1) * 0.55],
            [ntipx, ny1 - (ny1 - ny0) * 0.18],
        ]
    )
    add(bridge, width_of(0.85))
    nosew = (nx1 - nx0) * rng.uniform(0.18, 0.3)
    add(
        draw.ellipse_points(
            ntipx, ny1 - (ny1 - ny0) * 0.16, nosew, (ny1 - ny0) * 0.10,
            start=0.15 * np.pi, stop=0.85 * np.pi, segments=16,
        ),
        width_of(0.8),
    )

    # Mouth: upper and lower lip curves inside the mouth window.
    mx0, my0, mx1, my1 = _window_box(layout, ComponentKind.MOUTH, margin=1.5)
    mcx = (mx0 + mx1) / 2 + rng.normal(0, 0.6 * j)
    mcy = (my0 + my1) / 2 + rng.normal(0, 0.4 * j)
    mw = (mx1 - mx0) * rng.uniform(0.30, 0.44)
    smile = rng.uniform(-0.6, 1.4) * j
    t = np.linspace(-1.0, 1.0, 11)
    upper = np.column_stack([mcx + t * mw, mcy - smile * (1 - t * t) - 0.6])
    lower = np.column_stack(
        [mcx + t * mw, mcy + (my1 - mcy) * rng.uniform(0.25, 0.5) * (1 - t * t)]
    )
    add(upper, width_of(0.85))
    add(lower, width_of(0.85))

    # Hair: arcs hugging the upper face outline, remainder territory.
    n_hair = max(0, style.hair_strokes + int(rng.integers(-2, 3)))
    for _ in range(n_hair):
        a0 = rng.uniform(1.05, 1.45) * np.pi
        a1 = a0 + rng.uniform(0.25, 0.75) * np.pi
        rr = rng.uniform(1.0, 1.12)
        pts = draw.ellipse_points(cx, cy - ry * 0.12, rx * rr, ry * rr, a0, a1, segments=24)
        add(pts, width_of(0.9))

    return strokes


def rasterize_program(
    strokes: list[Stroke], width: int, height: int
) -> SketchRaster:
    ink = np.zeros((height, width))
    for stroke in strokes:
        ink = draw.draw_polyline(ink, stroke.points, stroke.width)
    return SketchRaster(quantize_ink(np.clip(ink, 0.0, 1.0)))


def generate_synthetic_face(
    seed: int,
    layout: ComponentLayout,
    style: SyntheticStyle = SyntheticStyle(),
) -> SketchRaster:
    """Pure function of (seed, layout, style): same inputs, same bits."""
    program = face_stroke_program(seed, layout, style)
    return rasterize_program(program, layout.width, layout.height)


def sample_name(index: int) -> str:
    return f"{index:04d}"


def write_corpus(
    out_dir: str | Path,
    n: int,
    seed: int,
    layout: ComponentLayout,
    style: SyntheticStyle = SyntheticStyle(),
) -> list[str]:
    """Generate ``n`` faces (seeds seed..seed+n-1) into a corpus directory."""
    if n < 1:
        raise InvalidInputError("corpus size must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_layout(layout, out / "layout.txt")
    ids, tag_lines = [], []
    for i in range(n):
        face_seed = seed + i
        raster = generate_synthetic_face(face_seed, layout, style)
        name = sample_name(i)
        write_pgm(raster, out / f"{name}.pgm")
        ids.append(name)
        tag_lines.append(f"{name}={face_tag(face_seed, style)}")
    (out / "tags.txt").write_text("\n".join(tag_lines) + "\n", encoding="utf-8")
    return ids


def load_corpus(
    corpus_dir: str | Path,
) -> tuple[list[str], list[SketchRaster], list[str], ComponentLayout]:
    """Read a corpus directory back: (ids, rasters, tags, layout)."""
    root = Path(corpus_dir)
    layout = load_layout(root / "layout.txt")
    tags_by_id: dict[str, str] = {}
    tags_file = root / "tags.txt"
    if tags_file.exists():
        for line in tags_file.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                tags_by_id[key] = value
    pgms = sorted(p for p in root.glob("*.pgm"))
    if not pgms:
        raise InvalidInputError(f"no .pgm samples under {root}")
    ids = [p.stem for p in pgms]
    rasters = [read_pgm(p) for p in pgms]
    tags = [tags_by_id.get(i, "") for i in ids]
    return ids, rasters, tags, layout
