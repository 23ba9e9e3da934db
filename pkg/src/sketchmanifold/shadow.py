"""Shadow guidance: per component, blend the most similar corpus crops
into a faint overlay placed at the component's window.

Blending uses inverse-distance weights over the K nearest neighbors, so
the overlay sharpens as the drawing approaches a specific sample.  The
two extremes are pinned: a crop identical to a corpus sample shows that
sample alone (weight entropy 0), and a blank crop shows the uniform
average of the whole component corpus, the intentionally blurry prior a
user sees on an empty canvas (entropy log N).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .components import ComponentKind, ComponentLayout, decompose
from .errors import InvalidInputError
from .manifold import EXACT_MATCH_DISTANCE, ManifoldStore, knn
from .pca import FaceEmbedder
from .raster import SketchRaster, write_pgm

BLANK_INK_THRESHOLD = 1e-9
DISTANCE_GUARD = 1e-6  # delta in w_k proportional to 1 / (d_k + delta)


def weight_entropy(weights: np.ndarray) -> float:
    """Shannon entropy in nats; zero-weight terms contribute nothing."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidInputError("entropy needs non-negative weights summing to 1")
    positive = w[w > 0]
    return float(-(positive * np.log(positive)).sum() + 0.0)


@dataclass(frozen=True)
class ComponentShadow:
    """Blended overlay for one component with its provenance weights."""

    component: ComponentKind
    raster: SketchRaster
    neighbor_ids: tuple[str, ...]
    weights: np.ndarray
    blank: bool

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.shape != (len(self.neighbor_ids),):
            raise InvalidInputError("one weight per neighbor id required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError("shadow weights must be >= 0 and sum to 1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "neighbor_ids", tuple(self.neighbor_ids))

    @property
    def entropy(self) -> float:
        return weight_entropy(self.weights)


@dataclass(frozen=True)
class ShadowOverlay:
    """All five component shadows plus their full-canvas composite."""

    k: int
    components: Mapping[ComponentKind, ComponentShadow]
    composite: SketchRaster

    def component(self, kind: ComponentKind) -> ComponentShadow:
        return self.components[kind]


def _blend_weights(distances: np.ndarray, uniform: bool) -> np.ndarray:
    k = distances.size
    if distances[0] < EXACT_MATCH_DISTANCE:
        w = np.zeros(k)
        w[0] = 1.0
        return w
    if uniform:
        return np.full(k, 1.0 / k)
    inv = 1.0 / (distances + DISTANCE_GUARD)
    return inv / inv.sum()


def compute_shadow(
    store: ManifoldStore,
    embedder: FaceEmbedder,
    sketch: SketchRaster,
    layout: ComponentLayout,
    k: int | None = None,
    uniform_blending: bool = False,
    tag_filter: str | None = None,
) -> ShadowOverlay:
    """Blend, per component, the K nearest corpus crops to the sketch's crop.

    A component crop with total ink below 1e-9 is treated as blank and
    falls back to the uniform average over every (tag-matching) corpus
    sample instead of a KNN query.
    """
    if store.crop_bank is None:
        raise InvalidInputError(
            "store has no crop bank; build it from a corpus or attach_crops()"
        )
    if embedder.digest() != store.embedder_digest:
        raise InvalidInputError("embedder digest does not match this store")
    k = store.default_k if k is None else k
    if k < 1:
        raise InvalidInputError(f"K must be >= 1, got {k}")

    decomposition = decompose(sketch, layout)
    shadows: dict[ComponentKind, ComponentShadow] = {}
    composite = np.zeros((layout.height, layout.width))
    for kind in ComponentKind:
        crop = decomposition.crop(kind)
        fs = store.features(kind)
        bank = store.crop_bank[kind]
        if bank.shape[0] != fs.size:
            raise InvalidInputError(f"crop bank size mismatch for {kind.slug}")

        blank = crop.raster.ink_mass < BLANK_INK_THRESHOLD
        if blank:
            rows = fs.candidate_indices(tag_filter)
            if rows.size == 0:
                raise InvalidInputError(f"no samples carry tag {tag_filter!r}")
            weights = np.full(rows.size, 1.0 / rows.size)
        else:
            latent = embedder.encode(kind, crop)
            neighbors = knn(store, kind, latent, k=k, tag_filter=tag_filter)
            rows = neighbors.indices
            weights = _blend_weights(neighbors.distances, uniform_blending)

        blended = weights @ bank[rows]
        window_shape = layout.window_shape(kind)
        raster = SketchRaster(np.clip(blended.reshape(window_shape), 0.0, 1.0))
        shadows[kind] = ComponentShadow(
            component=kind,
            raster=raster,
            neighbor_ids=tuple(fs.sample_ids[i] for i in rows),
            weights=weights,
            blank=blank,
        )
        x0, y0, x1, y1 = layout.window(kind)
        np.maximum(composite[y0:y1, x0:x1], raster.ink, out=composite[y0:y1, x0:x1])

    return ShadowOverlay(
        k=k,
        components=shadows,
        composite=SketchRaster(composite),
    )


def shadow_report(overlay: ShadowOverlay, max_neighbors: int | None = None) -> str:
    """Neighbor ids and weights as name=value text, largest weight first."""
    lines = [f"k={overlay.k}"]
    for kind in ComponentKind:
        shadow = overlay.component(kind)
        lines.append(f"{kind.slug}.blank={int(shadow.blank)}")
        lines.append(f"{kind.slug}.entropy={shadow.entropy:.9g}")
        order = np.argsort(-shadow.weights, kind="stable")
        if max_neighbors is not None:
            order = order[:max_neighbors]
        for rank, idx in enumerate(order):
            lines.append(f"{kind.slug}.neighbor.{rank}.id={shadow.neighbor_ids[idx]}")
            lines.append(
                f"{kind.slug}.neighbor.{rank}.weight={shadow.weights[idx]:.9g}"
            )
    return "\n".join(lines) + "\n"


def save_overlay(overlay: ShadowOverlay, out_dir: str | Path, prefix: str = "shadow") -> list[Path]:
    """P5 per component plus the composite and the neighbor report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in ComponentKind:
        path = out / f"{prefix}_{kind.slug}.pgm"
        write_pgm(overlay.component(kind).raster, path)
        written.append(path)
    composite_path = out / f"{prefix}_composite.pgm"
    write_pgm(overlay.composite, composite_path)
    written.append(composite_path)
    report_path = out / f"{prefix}_neighbors.txt"
    report_path.write_text(shadow_report(overlay), encoding="utf-8")
    written.append(report_path)
    return written
