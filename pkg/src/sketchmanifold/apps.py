"""Latent-space applications: face morphing and component recombination.

Morphing interpolates the five component latents linearly with a shared
parameter t and renders each step.  Recombination ("copy-paste") encodes
each component from a caller-chosen source face and fuses the mix under
the standard depth order.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from .components import ComponentKind, FaceSketchDecomposition
from .errors import InvalidInputError
from .fusion import DEFAULT_CHANNELS, synthesize
from .pca import FaceEmbedder, LatentVector
from .raster import SketchRaster, write_pgm


def interpolate_latents(
    latents_a: Mapping[ComponentKind, LatentVector],
    latents_b: Mapping[ComponentKind, LatentVector],
    t: float | Mapping[ComponentKind, float],
) -> dict[ComponentKind, LatentVector]:
    """Per-component (1 - t) * a + t * b; t may vary per component.

    t = 0 and t = 1 return the endpoint latents untouched, so endpoint
    frames are bit-identical to the source reconstructions.
    """
    if set(latents_a) != set(ComponentKind) or set(latents_b) != set(ComponentKind):
        raise InvalidInputError("interpolation needs one latent per component")
    out: dict[ComponentKind, LatentVector] = {}
    for kind in ComponentKind:
        tk = t[kind] if isinstance(t, Mapping) else t
        if not (0.0 <= tk <= 1.0):
            raise InvalidInputError(f"interpolation parameter {tk} outside [0, 1]")
        a, b = latents_a[kind], latents_b[kind]
        if a.dim != b.dim:
            raise InvalidInputError(f"{kind.slug} latents differ in dimension")
        if tk == 0.0:
            out[kind] = a
        elif tk == 1.0:
            out[kind] = b
        else:
            out[kind] = LatentVector(kind, (1.0 - tk) * a.values + tk * b.values)
    return out


def morph_latents(
    embedder: FaceEmbedder,
    decomp_a: FaceSketchDecomposition,
    decomp_b: FaceSketchDecomposition,
    steps: int,
) -> list[dict[ComponentKind, LatentVector]]:
    """Latent tracks of the morph: step i uses t = i / (steps - 1)."""
    if steps < 2:
        raise InvalidInputError("a morph needs at least 2 steps")
    if decomp_a.layout != decomp_b.layout:
        raise InvalidInputError("morph sources must share a layout")
    latents_a = embedder.encode_face(decomp_a)
    latents_b = embedder.encode_face(decomp_b)
    return [
        interpolate_latents(latents_a, latents_b, i / (steps - 1))
        for i in range(steps)
    ]


def morph_sequence(
    embedder: FaceEmbedder,
    decomp_a: FaceSketchDecomposition,
    decomp_b: FaceSketchDecomposition,
    steps: int,
    channels: int = DEFAULT_CHANNELS,
) -> list[SketchRaster]:
    """Rendered morph frames from source A (t=0) to source B (t=1)."""
    layout = decomp_a.layout
    return [
        synthesize(embedder, latents, layout, channels=channels)
        for latents in morph_latents(embedder, decomp_a, decomp_b, steps)
    ]


def recombine_components(
    embedder: FaceEmbedder,
    sources: Mapping[ComponentKind, FaceSketchDecomposition],
    channels: int = DEFAULT_CHANNELS,
) -> SketchRaster:
    """Render a face whose components come from different source sketches."""
    missing = [kind.slug for kind in ComponentKind if kind not in sources]
    if missing:
        raise InvalidInputError(f"recombination missing sources for: {missing}")
    layout = sources[ComponentKind.REMAINDER].layout
    for kind, dec in sources.items():
        if dec.layout != layout:
            raise InvalidInputError(f"{kind.slug} source uses a different layout")
    latents = {
        kind: embedder.encode(kind, sources[kind].crop(kind))
        for kind in ComponentKind
    }
    return synthesize(embedder, latents, layout, channels=channels)


def save_frames(
    frames: Sequence[SketchRaster], out_dir: str | Path, prefix: str = "frame"
) -> list[Path]:
    """Write a frame sequence as zero-padded numbered P5 files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = out / f"{prefix}_{i:04d}.pgm"
        write_pgm(frame, path)
        paths.append(path)
    return paths
