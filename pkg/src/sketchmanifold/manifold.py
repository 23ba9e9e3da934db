"""Per-component feature sets with exact KNN retrieval, locally linear
reconstruction weights, manifold projection, and user-weighted blending.

A query latent is refined by finding its K nearest corpus latents under
the Euclidean metric, solving for sum-to-one interpolation weights that
best reconstruct the query from those neighbors, and taking the weighted
combination as the projected point.  Weights may be negative; only their
sum is constrained.

Store files: magic ``FMST``, version u32, embedder digest, default K, five
per-component blocks (count, d, f64 vectors, ids, tags), trailing CRC32.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .components import ComponentKind, FaceSketchDecomposition
from .errors import CorruptFileError, DimensionMismatchError, InvalidInputError
from .pca import FaceEmbedder, LatentVector

_FMST_MAGIC = b"FMST"
_FMST_VERSION = 1

EXACT_MATCH_DISTANCE = 1e-12
DEFAULT_REGULARIZATION = 1e-3
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class NeighborSet:
    """K nearest sample indices with ascending exact distances."""

    indices: np.ndarray   # (K,) int64 row indices into the feature set
    distances: np.ndarray  # (K,) float64, sorted ascending

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).copy()
        dist = np.asarray(self.distances, dtype=np.float64).copy()
        if idx.ndim != 1 or idx.shape != dist.shape or idx.size < 1:
            raise InvalidInputError("neighbor indices/distances must be equal-length 1-D")
        if len(set(idx.tolist())) != idx.size:
            raise InvalidInputError("neighbor indices must be distinct")
        if np.any(np.diff(dist) < 0) or dist[0] < 0:
            raise InvalidInputError("distances must be non-negative ascending")
        idx.flags.writeable = False
        dist.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "distances", dist)

    @property
    def k(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class WeightVector:
    """Sum-to-one interpolation weights over a neighbor set."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("weights must be a non-empty 1-D vector")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"weights sum to {w.sum()}, expected 1")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class FeatureSet:
    """All corpus latents of one component, with sample back-references."""

    component: ComponentKind
    vectors: np.ndarray          # (N, d)
    sample_ids: tuple[str, ...]  # unique
    tags: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64).copy()
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise InvalidInputError("feature set needs an (N, d) matrix with N >= 1")
        if len(self.sample_ids) != arr.shape[0]:
            raise InvalidInputError("one sample id per row required")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise InvalidInputError("sample ids must be unique")
        if self.tags is not None and len(self.tags) != arr.shape[0]:
            raise InvalidInputError("one tag per row required when tags are present")
        arr.flags.writeable = False
        object.__setattr__(self, "vectors", arr)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def candidate_indices(self, tag_filter: str | None) -> np.ndarray:
        if tag_filter is None:
            return np.arange(self.size)
        if self.tags is None:
            raise InvalidInputError("feature set has no tags to filter on")
        return np.flatnonzero(np.asarray(self.tags) == tag_filter)


@dataclass
class ManifoldStore:
    """One feature set per component plus the embedder that produced them.

    ``embedder`` and ``crop_bank`` (original corpus crops, used for shadow
    blending) live only in memory; store files persist the feature sets,
    ids, tags, default K, and the embedder digest for later pairing.
    """

    feature_sets: dict[ComponentKind, FeatureSet]
    default_k: int
    embedder_digest: bytes
    embedder: FaceEmbedder | None = None
    crop_bank: dict[ComponentKind, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if set(self.feature_sets) != set(ComponentKind):
            raise InvalidInputError("store requires all five components")
        smallest = min(fs.size for fs in self.feature_sets.values())
        if not (1 <= self.default_k <= smallest):
            raise InvalidInputError(
                f"default K={self.default_k} out of range [1, {smallest}]"
            )

    def features(self, kind: ComponentKind) -> FeatureSet:
        return self.feature_sets[kind]

    def attach_embedder(self, embedder: FaceEmbedder) -> None:
        if embedder.digest() != self.embedder_digest:
            raise InvalidInputError("embedder digest does not match this store")
        self.embedder = embedder

    def attach_crops(self, corpus: Sequence[FaceSketchDecomposition]) -> None:
        """Rebuild the in-memory crop bank from corpus decompositions.

        Store files persist only latents; shadow blending needs the
        original crop pixels, so they are re-derived from the corpus after
        loading.  Order must match the stored sample ids.
        """
        n = self.features(ComponentKind.LEFT_EYE).size
        if len(corpus) != n:
            raise InvalidInputError(
                f"corpus size {len(corpus)} does not match store size {n}"
            )
        bank: dict[ComponentKind, np.ndarray] = {}
        for kind in ComponentKind:
            bank[kind] = np.stack(
                [dec.crop(kind).raster.ink.reshape(-1) for dec in corpus]
            )
        self.crop_bank = bank


def build_store(
    embedder: FaceEmbedder,
    corpus: Sequence[FaceSketchDecomposition],
    sample_ids: Sequence[str] | None = None,
    tags: Sequence[str] | None = None,
    default_k: int = 10,
) -> ManifoldStore:
    """Encode every corpus decomposition into per-component feature rows."""
    if len(corpus) == 0:
        raise InvalidInputError("corpus must be non-empty")
    if sample_ids is None:
        sample_ids = [f"{i:04d}" for i in range(len(corpus))]
    if len(sample_ids) != len(corpus):
        raise InvalidInputError("one sample id per corpus entry required")
    if tags is not None and len(tags) != len(corpus):
        raise InvalidInputError("one tag per corpus entry required")

    feature_sets: dict[ComponentKind, FeatureSet] = {}
    crop_bank: dict[ComponentKind, np.ndarray] = {}
    for kind in ComponentKind:
        rows = np.stack(
            [embedder.encode(kind, dec.crop(kind)).values for dec in corpus]
        )
        crops = np.stack(
            [dec.crop(kind).raster.ink.reshape(-1) for dec in corpus]
        )
        feature_sets[kind] = FeatureSet(
            component=kind,
            vectors=rows,
            sample_ids=tuple(sample_ids),
            tags=tuple(tags) if tags is not None else None,
        )
        crop_bank[kind] = crops
    return ManifoldStore(
        feature_sets=feature_sets,
        default_k=default_k,
        embedder_digest=embedder.digest(),
        embedder=embedder,
        crop_bank=crop_bank,
    )


def nearest_neighbors(
    vectors: np.ndarray, query: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact brute-force K smallest Euclidean distances, ties by index.

    Differences are evaluated directly (no norm expansion), so a query that
    equals a stored row reports a distance of exactly 0.  Elementwise math
    keeps this single-threaded regardless of BLAS configuration.
    """
    diff = vectors - query
    d2 = np.einsum("ij,ij->i", diff, diff)
    if k < d2.size:
        part = np.argpartition(d2, k - 1)
        boundary = np.max(d2[part[:k]])
        candidates = np.flatnonzero(d2 <= boundary)
    else:
        candidates = np.arange(d2.size)
    order = candidates[np.lexsort((candidates, d2[candidates]))][:k]
    return order, np.sqrt(d2[order])


def knn(
    store: ManifoldStore,
    component: ComponentKind,
    query: LatentVector,
    k: int | None = None,
    tag_filter: str | None = None,
) -> NeighborSet:
    """K nearest feature rows of one component under Euclidean distance."""
    fs = store.features(component)
    if query.dim != fs.dim:
        raise DimensionMismatchError(
            f"query dim {query.dim} does not match feature dim {fs.dim}"
        )
    k = store.default_k if k is None else k
    candidates = fs.candidate_indices(tag_filter)
    if candidates.size == 0:
        raise InvalidInputError(f"no samples carry tag {tag_filter!r}")
    if not (1 <= k <= candidates.size):
        raise InvalidInputError(f"K={k} out of range [1, {candidates.size}]")
    local, dist = nearest_neighbors(fs.vectors[candidates], query.values, k)
    return NeighborSet(indices=candidates[local], distances=dist)


def solve_lle_weights(
    query: np.ndarray | LatentVector,
    neighbors: np.ndarray,
    regularization: float = DEFAULT_REGULARIZATION,
) -> WeightVector:
    """Sum-to-one weights minimizing the reconstruction error of ``query``.

    Solves the local Gram system G w = 1 (G_jk = (f - f_j) . (f - f_k)) and
    normalizes.  A neighbor within 1e-12 of the query short-circuits to a
    one-hot weight on the first such neighbor, which also makes projection
    idempotent.  Singular or ill-conditioned systems fall back to the exact
    linearly-constrained stationarity system, and only as a last resort to
    Tikhonov conditioning G + eps * trace(G)/K * I.
    """
    f = query.values if isinstance(query, LatentVector) else np.asarray(query, dtype=np.float64)
    nb = np.asarray(neighbors, dtype=np.float64)
    if nb.ndim != 2 or nb.shape[0] < 1:
        raise InvalidInputError("neighbors must be a (K, d) matrix with K >= 1")
    if nb.shape[1] != f.shape[0]:
        raise DimensionMismatchError("neighbor dimension does not match query")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(nb))):
        raise InvalidInputError("non-finite inputs")
    k = nb.shape[0]

    gaps = np.sqrt(np.einsum("ij,ij->i", nb - f, nb - f))
    hits = np.flatnonzero(gaps < EXACT_MATCH_DISTANCE)
    if hits.size:
        w = np.zeros(k)
        w[hits[0]] = 1.0
        return WeightVector(w)

    z = f - nb  # rows: f - f_j
    gram = z @ z.T
    ones = np.ones(k)

    w = _solve_direct(gram, ones)
    if w is None:
        w = _solve_constrained_stationarity(gram, k)
    if w is None:
        scale = regularization * np.trace(gram) / k
        w = np.linalg.lstsq(gram + scale * np.eye(k), ones, rcond=None)[0]
        total = w.sum()
        w = np.full(k, 1.0 / k) if abs(total) < 1e-300 else w / total
    return WeightVector(w)


def _solve_direct(gram: np.ndarray, ones: np.ndarray) -> np.ndarray | None:
    """Plain Gram solve + normalize; None when the system is untrustworthy."""
    if gram.shape[0] > 1 and np.linalg.cond(gram) > _COND_LIMIT:
        return None
    try:
        w = np.linalg.solve(gram, ones)
    except np.linalg.LinAlgError:
        return None
    total = w.sum()
    if not np.all(np.isfinite(w)) or abs(total) < 1e-300:
        return None
    return w / total


def _solve_constrained_stationarity(gram: np.ndarray, k: int) -> np.ndarray | None:
    """Minimum-norm solution of the stationarity system of
    min wᵀGw subject to sum(w) = 1; exact even for singular G."""
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * gram
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    w = sol[:k]
    if not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > 1e-6:
        return None
    # Renormalize the residual rounding on the constraint.
    return w / w.sum()


def project(
    store: ManifoldStore,
    component: ComponentKind,
    query: LatentVector,
    k: int | None = None,
    tag_filter: str | None = None,
    regularization: float = DEFAULT_REGULARIZATION,
) -> LatentVector:
    """Refine a query latent: weighted combination of its K nearest rows."""
    neighbors = knn(store, component, query, k=k, tag_filter=tag_filter)
    rows = store.features(component).vectors[neighbors.indices]
    weights = solve_lle_weights(query, rows, regularization=regularization)
    return LatentVector(component, weights.weights @ rows)


def project_detailed(
    store: ManifoldStore,
    component: ComponentKind,
    query: LatentVector,
    k: int | None = None,
    tag_filter: str | None = None,
    regularization: float = DEFAULT_REGULARIZATION,
) -> tuple[LatentVector, NeighborSet, WeightVector]:
    """Like :func:`project` but also returns the retrieval and weights."""
    neighbors = knn(store, component, query, k=k, tag_filter=tag_filter)
    rows = store.features(component).vectors[neighbors.indices]
    weights = solve_lle_weights(query, rows, regularization=regularization)
    return LatentVector(component, weights.weights @ rows), neighbors, weights


def leave_one_out_projections(
    store: ManifoldStore,
    component: ComponentKind,
    k: int,
    regularization: float = DEFAULT_REGULARIZATION,
) -> tuple[np.ndarray, np.ndarray]:
    """Project every corpus row onto the manifold spanned by the others.

    With self-matches allowed an in-corpus query is its own nearest
    neighbor and the projection is trivially exact, so quality sweeps use
    this held-out variant.  Returns (projections (N, d), residual norms).
    """
    fs = store.features(component)
    if not (1 <= k <= fs.size - 1):
        raise InvalidInputError(f"K={k} out of range [1, {fs.size - 1}]")
    projections = np.empty_like(fs.vectors)
    residuals = np.empty(fs.size)
    mask = np.ones(fs.size, dtype=bool)
    for i in range(fs.size):
        mask[i] = False
        others = fs.vectors[mask]
        idx, _ = nearest_neighbors(others, fs.vectors[i], k)
        rows = others[idx]
        weights = solve_lle_weights(fs.vectors[i], rows, regularization=regularization)
        projections[i] = weights.weights @ rows
        residuals[i] = np.linalg.norm(fs.vectors[i] - projections[i])
        mask[i] = True
    return projections, residuals


def blend(f_query: LatentVector, f_proj: LatentVector, wb: float) -> LatentVector:
    """Affine mix wb * query + (1 - wb) * projection, wb in [0, 1].

    wb = 1 returns the query untouched (full use of the input sketch);
    wb = 0 returns the projection (fully trust the data).  Endpoints are
    short-circuited so they are bit-exact.
    """
    if f_query.component is not f_proj.component:
        raise InvalidInputError("blend arguments are for different components")
    if f_query.dim != f_proj.dim:
        raise DimensionMismatchError("blend arguments differ in dimension")
    if not (0.0 <= wb <= 1.0):
        raise InvalidInputError(f"blend weight {wb} outside [0, 1]")
    if wb == 1.0:
        return f_query
    if wb == 0.0:
        return f_proj
    return LatentVector(
        f_query.component, wb * f_query.values + (1.0 - wb) * f_proj.values
    )


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise InvalidInputError("string field too long to serialize")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptFileError("store file truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        (n,) = struct.unpack("<H", self.take(2))
        return self.take(n).decode("utf-8")


def serialize_store(store: ManifoldStore) -> bytes:
    out = bytearray()
    out += _FMST_MAGIC
    out += struct.pack("<I", _FMST_VERSION)
    out += struct.pack("<I", len(store.embedder_digest))
    out += store.embedder_digest
    out += struct.pack("<I", store.default_k)
    for kind in ComponentKind:
        fs = store.features(kind)
        out += struct.pack("<III", kind.value, fs.size, fs.dim)
        out += np.ascontiguousarray(fs.vectors, dtype="<f8").tobytes()
        for sid in fs.sample_ids:
            out += _pack_str(sid)
        out += struct.pack("<B", 1 if fs.tags is not None else 0)
        if fs.tags is not None:
            for tag in fs.tags:
                out += _pack_str(tag)
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def deserialize_store(blob: bytes) -> ManifoldStore:
    if len(blob) < 8 or blob[:4] != _FMST_MAGIC:
        raise CorruptFileError("bad store file magic")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptFileError("store file checksum mismatch")
    r = _Reader(blob[:-4])
    r.take(4)
    version = r.u32()
    if version != _FMST_VERSION:
        raise CorruptFileError(f"unsupported store file version {version}")
    digest = r.take(r.u32())
    default_k = r.u32()
    feature_sets: dict[ComponentKind, FeatureSet] = {}
    for kind in ComponentKind:
        kind_value, count, dim = r.u32(), r.u32(), r.u32()
        if kind_value != kind.value:
            raise CorruptFileError("store component blocks out of order")
        vectors = np.frombuffer(r.take(8 * count * dim), dtype="<f8").reshape(count, dim)
        ids = tuple(r.string() for _ in range(count))
        has_tags = r.take(1)[0]
        tags = tuple(r.string() for _ in range(count)) if has_tags else None
        feature_sets[kind] = FeatureSet(
            component=kind, vectors=vectors.astype(np.float64),
            sample_ids=ids, tags=tags,
        )
    if r.pos != len(r.blob):
        raise CorruptFileError("trailing bytes in store file")
    return ManifoldStore(
        feature_sets=feature_sets, default_k=default_k, embedder_digest=digest
    )


def save_store(store: ManifoldStore, path: str | Path) -> None:
    Path(path).write_bytes(serialize_store(store))


def load_store(path: str | Path) -> ManifoldStore:
    """Read a store file; embedder and crop bank must be re-attached."""
    return deserialize_store(Path(path).read_bytes())
