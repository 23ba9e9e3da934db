"""Per-component feature embedding via principal component analysis.

PCA is the reference embedder: deterministic, oracle-checkable, and linear,
so encode/decode identities hold exactly on the model's span.  All MSE math
runs on pre-clamp values; clamping to [0, 1] happens only when a latent is
rendered back into a raster.

Model files use a small binary format: magic ``FMEM``, version u32, then
component tag and dimensions, then mean and basis as little-endian f64.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .components import ComponentCrop, ComponentKind
from .errors import CorruptFileError, DimensionMismatchError, InvalidInputError
from .raster import SketchRaster

_FMEM_MAGIC = b"FMEM"
_FMEM_VERSION = 1


@dataclass(frozen=True)
class LatentVector:
    """d-dimensional feature descriptor of one component crop."""

    component: ComponentKind
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError("latent values must be 1-D")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("latent values must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


class ComponentEmbedder(Protocol):
    """Encode/decode contract every embedder implementation satisfies."""

    kind: ComponentKind

    @property
    def latent_dim(self) -> int: ...

    @property
    def crop_shape(self) -> tuple[int, int]: ...

    def encode(self, crop: ComponentCrop) -> LatentVector: ...

    def decode(self, latent: LatentVector) -> ComponentCrop: ...

    def decode_values(self, values: np.ndarray) -> np.ndarray: ...

    def digest_bytes(self) -> bytes: ...


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal linear embedder for one component kind.

    ``mean`` is the flattened corpus average; ``basis`` holds d orthonormal
    principal directions as rows, each sign-fixed so its largest-magnitude
    entry is non-negative.
    """

    kind: ComponentKind
    crop_shape: tuple[int, int]
    mean: np.ndarray   # (H*W,)
    basis: np.ndarray  # (d, H*W)

    def __post_init__(self):
        for name in ("mean", "basis"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.mean.shape != (self.crop_shape[0] * self.crop_shape[1],):
            raise DimensionMismatchError("mean length does not match crop shape")
        if self.basis.ndim != 2 or self.basis.shape[1] != self.mean.shape[0]:
            raise DimensionMismatchError("basis shape does not match crop shape")

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[0]

    def _check_crop(self, crop: ComponentCrop) -> np.ndarray:
        if crop.kind is not self.kind:
            raise InvalidInputError(f"model is for {self.kind.slug}, crop is {crop.kind.slug}")
        if (crop.raster.height, crop.raster.width) != self.crop_shape:
            raise DimensionMismatchError(
                f"crop {crop.raster.height}x{crop.raster.width} does not match "
                f"model {self.crop_shape[0]}x{self.crop_shape[1]}"
            )
        return crop.raster.ink.reshape(-1)

    def encode(self, crop: ComponentCrop) -> LatentVector:
        flat = self._check_crop(crop)
        return LatentVector(self.kind, self.basis @ (flat - self.mean))

    def decode_values(self, values: np.ndarray) -> np.ndarray:
        """Pre-clamp reconstruction as a flat vector; keeps linear identities."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.latent_dim,):
            raise DimensionMismatchError(
                f"latent of dim {values.shape} does not match model d={self.latent_dim}"
            )
        return self.mean + self.basis.T @ values

    def decode(self, latent: LatentVector) -> ComponentCrop:
        if latent.component is not self.kind:
            raise InvalidInputError(
                f"model is for {self.kind.slug}, latent is {latent.component.slug}"
            )
        flat = np.clip(self.decode_values(latent.values), 0.0, 1.0)
        return ComponentCrop(self.kind, SketchRaster(flat.reshape(self.crop_shape)))

    def digest_bytes(self) -> bytes:
        return serialize_pca(self)


def _stack_corpus(corpus: Sequence[ComponentCrop]) -> tuple[ComponentKind, tuple[int, int], np.ndarray]:
    if len(corpus) == 0:
        raise InvalidInputError("corpus must be non-empty")
    kind = corpus[0].kind
    shape = (corpus[0].raster.height, corpus[0].raster.width)
    rows = []
    for crop in corpus:
        if crop.kind is not kind:
            raise InvalidInputError("corpus mixes component kinds")
        if (crop.raster.height, crop.raster.width) != shape:
            raise DimensionMismatchError("corpus crops differ in size")
        rows.append(crop.raster.ink.reshape(-1))
    return kind, shape, np.stack(rows)


def fit_pca(corpus: Sequence[ComponentCrop], d: int) -> PcaModel:
    """Fit the top-d principal directions of a same-kind crop corpus.

    Directions are ordered by singular value as returned by the SVD (ties
    keep their index order) and sign-fixed per basis vector.
    """
    kind, shape, data = _stack_corpus(corpus)
    n, p = data.shape
    if not (1 <= d <= min(n, p)):
        raise InvalidInputError(f"d={d} out of range [1, {min(n, p)}]")
    mean = data.mean(axis=0)
    centered = data - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[:d].copy()
    for row in basis:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    return PcaModel(kind=kind, crop_shape=shape, mean=mean, basis=basis)


def reconstruction_mse(model: PcaModel, corpus: Sequence[ComponentCrop]) -> float:
    """Mean over the corpus of per-pixel squared error, pre-clamp."""
    _, shape, data = _stack_corpus(corpus)
    if shape != model.crop_shape:
        raise DimensionMismatchError("corpus crops do not match model shape")
    centered = data - model.mean
    recon = centered @ model.basis.T @ model.basis
    return float(np.mean((centered - recon) ** 2))


def serialize_pca(model: PcaModel) -> bytes:
    h, w = model.crop_shape
    head = _FMEM_MAGIC + struct.pack(
        "<IIIII", _FMEM_VERSION, model.kind.value, model.latent_dim, h, w
    )
    return head + model.mean.tobytes() + np.ascontiguousarray(model.basis).tobytes()


def deserialize_pca(blob: bytes) -> PcaModel:
    if blob[:4] != _FMEM_MAGIC:
        raise CorruptFileError("bad embedder file magic")
    try:
        version, kind_value, d, h, w = struct.unpack_from("<IIIII", blob, 4)
    except struct.error as exc:
        raise CorruptFileError("embedder header truncated") from exc
    if version != _FMEM_VERSION:
        raise CorruptFileError(f"unsupported embedder file version {version}")
    p = h * w
    offset = 4 + 20
    need = offset + 8 * p * (1 + d)
    if len(blob) != need:
        raise CorruptFileError(f"embedder payload is {len(blob)} bytes, expected {need}")
    mean = np.frombuffer(blob, dtype="<f8", count=p, offset=offset)
    basis = np.frombuffer(blob, dtype="<f8", count=d * p, offset=offset + 8 * p)
    return PcaModel(
        kind=ComponentKind(kind_value),
        crop_shape=(h, w),
        mean=mean.astype(np.float64),
        basis=basis.reshape(d, p).astype(np.float64),
    )


def save_pca(model: PcaModel, path: str | Path) -> None:
    Path(path).write_bytes(serialize_pca(model))


def load_pca(path: str | Path) -> PcaModel:
    return deserialize_pca(Path(path).read_bytes())


class FaceEmbedder:
    """Bundle of five per-component embedders sharing one latent contract."""

    def __init__(self, models: dict[ComponentKind, ComponentEmbedder]):
        if set(models) != set(ComponentKind):
            raise InvalidInputError("face embedder requires all five components")
        self.models = dict(models)

    def __getitem__(self, kind: ComponentKind) -> ComponentEmbedder:
        return self.models[kind]

    def encode(self, kind: ComponentKind, crop: ComponentCrop) -> LatentVector:
        return self.models[kind].encode(crop)

    def decode(self, latent: LatentVector) -> ComponentCrop:
        return self.models[latent.component].decode(latent)

    def encode_face(self, decomposition) -> dict[ComponentKind, LatentVector]:
        """Encode all five crops of a decomposed sketch."""
        return {
            kind: self.models[kind].encode(decomposition.crop(kind))
            for kind in ComponentKind
        }

    def digest(self) -> bytes:
        """Stable identity of the fitted models, for store/embedder pairing."""
        acc = hashlib.sha256()
        for kind in ComponentKind:
            acc.update(self.models[kind].digest_bytes())
        return acc.digest()


def fit_face_pca(
    decompositions: Sequence, d: int | dict[ComponentKind, int]
) -> FaceEmbedder:
    """Fit one PCA model per component over a corpus of decompositions."""
    models: dict[ComponentKind, ComponentEmbedder] = {}
    for kind in ComponentKind:
        crops = [dec.crop(kind) for dec in decompositions]
        dk = d[kind] if isinstance(d, dict) else d
        models[kind] = fit_pca(crops, dk)
    return FaceEmbedder(models)


def save_face_embedder(embedder: FaceEmbedder, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind, model in embedder.models.items():
        if not isinstance(model, PcaModel):
            raise InvalidInputError("only PCA embedders have a file format")
        save_pca(model, out / f"{kind.slug}.fmem")


def load_face_embedder(model_dir: str | Path) -> FaceEmbedder:
    root = Path(model_dir)
    models: dict[ComponentKind, ComponentEmbedder] = {}
    for kind in ComponentKind:
        path = root / f"{kind.slug}.fmem"
        if not path.exists():
            raise CorruptFileError(f"missing embedder model file {path}")
        models[kind] = load_pca(path)
    return FaceEmbedder(models)
