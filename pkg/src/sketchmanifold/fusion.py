"""Latent-to-canvas assembly: decode component latents to spatial feature
maps, place them at their window positions, merge under the fixed depth
order, and render a preview raster.

Depth order is left-eye > right-eye > nose > mouth > remainder.  The
eyes are tied conceptually; left wins their rare overlap so the merge is
a total order.  Merging paints lowest priority first, so the priority
winner at each pixel is simply whoever painted last.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .components import DEPTH_ORDER, ComponentKind, ComponentLayout
from .errors import DimensionMismatchError, InvalidInputError
from .pca import FaceEmbedder, LatentVector
from .raster import SketchRaster, raw_pgm_bytes

DEFAULT_CHANNELS = 8
PROVENANCE_STEP = 50  # provenance dump intensity = kind value * this


@dataclass(frozen=True)
class FeatureMap:
    """Multi-channel spatial map of one decoded component."""

    component: ComponentKind
    data: np.ndarray  # (C, H, W)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).copy()
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise InvalidInputError("feature map must be (C, H, W) with C >= 1")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("feature map values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]


@dataclass(frozen=True)
class FusedCanvas:
    """Full-canvas merge of the five feature maps.

    ``provenance`` holds, per pixel, the kind value of the component that
    supplied the value there (the highest-priority window covering it).
    """

    data: np.ndarray        # (C, H, W)
    provenance: np.ndarray  # (H, W) uint8 of ComponentKind values

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).copy()
        prov = np.asarray(self.provenance, dtype=np.uint8).copy()
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise InvalidInputError("fused canvas must be (C, H, W) with C >= 1")
        if prov.shape != arr.shape[1:]:
            raise InvalidInputError("provenance mask shape must match the canvas")
        valid = {kind.value for kind in ComponentKind}
        if not set(np.unique(prov).tolist()) <= valid:
            raise InvalidInputError("provenance mask holds unknown component values")
        arr.flags.writeable = False
        prov.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "provenance", prov)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def provenance_kind(self, x: int, y: int) -> ComponentKind:
        return ComponentKind(int(self.provenance[y, x]))


def map_latent(
    embedder: FaceEmbedder, latent: LatentVector, channels: int = DEFAULT_CHANNELS
) -> FeatureMap:
    """Decode a latent into a C-channel map at its component's window size.

    Channel 0 is the raw (pre-clamp) decode.  Channels 1 and 2, when
    present, carry its horizontal and vertical gradients; the rest are
    zero.  The derived channels keep the multi-channel plumbing honest
    without a trained per-channel decoder.
    """
    if channels < 1:
        raise InvalidInputError("channel count must be >= 1")
    model = embedder[latent.component]
    if latent.dim != model.latent_dim:
        raise DimensionMismatchError(
            f"latent dim {latent.dim} does not match embedder dim {model.latent_dim}"
        )
    h, w = model.crop_shape
    base = model.decode_values(latent.values).reshape(h, w)
    data = np.zeros((channels, h, w))
    data[0] = base
    if channels > 1 and w > 1:
        data[1] = np.gradient(base, axis=1)
    if channels > 2 and h > 1:
        data[2] = np.gradient(base, axis=0)
    return FeatureMap(component=latent.component, data=data)


def fuse(
    maps: Iterable[FeatureMap] | Mapping[ComponentKind, FeatureMap],
    layout: ComponentLayout,
) -> FusedCanvas:
    """Merge the five component maps onto the full canvas by depth order."""
    if isinstance(maps, Mapping):
        by_kind = dict(maps)
    else:
        by_kind = {}
        for fmap in maps:
            if fmap.component in by_kind:
                raise InvalidInputError(f"duplicate map for {fmap.component.slug}")
            by_kind[fmap.component] = fmap
    if set(by_kind) != set(ComponentKind):
        missing = [k.slug for k in ComponentKind if k not in by_kind]
        raise InvalidInputError(f"fuse needs all five maps, missing: {missing}")

    channels = by_kind[ComponentKind.REMAINDER].channels
    for kind, fmap in by_kind.items():
        if fmap.channels != channels:
            raise DimensionMismatchError("all maps must share the channel count")
        if fmap.spatial_shape != layout.window_shape(kind):
            raise DimensionMismatchError(
                f"{kind.slug} map shape {fmap.spatial_shape} does not match "
                f"window shape {layout.window_shape(kind)}"
            )

    data = np.zeros((channels, layout.height, layout.width))
    provenance = np.zeros((layout.height, layout.width), dtype=np.uint8)
    for kind in reversed(DEPTH_ORDER):  # lowest priority first, winner paints last
        x0, y0, x1, y1 = layout.window(kind)
        data[:, y0:y1, x0:x1] = by_kind[kind].data
        provenance[y0:y1, x0:x1] = kind.value
    return FusedCanvas(data=data, provenance=provenance)


def render_preview(canvas: FusedCanvas) -> SketchRaster:
    """Channel 0 clamped to [0, 1] as the displayable sketch."""
    return SketchRaster(np.clip(canvas.data[0], 0.0, 1.0))


def synthesize(
    embedder: FaceEmbedder,
    latents: Mapping[ComponentKind, LatentVector],
    layout: ComponentLayout,
    channels: int = DEFAULT_CHANNELS,
) -> SketchRaster:
    """map_latent each component, fuse, and render in one call."""
    if set(latents) != set(ComponentKind):
        raise InvalidInputError("synthesize needs one latent per component")
    maps = [map_latent(embedder, latents[kind], channels) for kind in ComponentKind]
    return render_preview(fuse(maps, layout))


def fuse_latents(
    embedder: FaceEmbedder,
    latents: Mapping[ComponentKind, LatentVector],
    layout: ComponentLayout,
    channels: int = DEFAULT_CHANNELS,
) -> FusedCanvas:
    """map_latent each component and fuse, keeping the pre-clamp canvas."""
    if set(latents) != set(ComponentKind):
        raise InvalidInputError("fusion needs one latent per component")
    maps = [map_latent(embedder, latents[kind], channels) for kind in ComponentKind]
    return fuse(maps, layout)


def _write_raw_pgm(path: Path, values: np.ndarray) -> None:
    path.write_bytes(raw_pgm_bytes(values))


def dump_canvas(canvas: FusedCanvas, out_dir: str | Path, prefix: str = "fused") -> list[Path]:
    """Debug dump: one P5 per channel plus the provenance mask.

    Channel values are clamped to [0, 1] for display.  The provenance file
    encodes kind k at intensity k * 50 so the five regions are visually
    distinct in any viewer.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for c in range(canvas.channels):
        level = np.rint(np.clip(canvas.data[c], 0.0, 1.0) * 255.0)
        path = out / f"{prefix}_ch{c}.pgm"
        _write_raw_pgm(path, level)
        written.append(path)
    prov_path = out / f"{prefix}_provenance.pgm"
    _write_raw_pgm(prov_path, canvas.provenance * np.uint8(PROVENANCE_STEP))
    written.append(prov_path)
    return written
