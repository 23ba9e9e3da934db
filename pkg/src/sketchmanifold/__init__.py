"""Component-manifold face sketch refinement.

Face sketches are decomposed into five components (left eye, right eye,
nose, mouth, remainder), embedded per component, snapped toward the
corpus manifold by locally linear reconstruction from nearest neighbors,
blended against the raw input under user weights, and fused back into a
full-canvas preview.  Shadow guidance, morphing, recombination, a batch
CLI, and an interactive HTTP/WebSocket service sit on top.

Submodule imports are lazy so lightweight entry points (CLI argument
errors, thread pinning before numpy loads) stay cheap.
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # errors
    "SketchManifoldError": "errors",
    "InvalidInputError": "errors",
    "DimensionMismatchError": "errors",
    "CorruptFileError": "errors",
    "TrainingDivergedError": "errors",
    "UnknownSessionError": "errors",
    # rasters and drawing
    "SketchRaster": "raster",
    "read_pgm": "raster",
    "write_pgm": "raster",
    "quantize_ink": "raster",
    "draw_polyline": "draw",
    "erase_polyline": "draw",
    # components
    "ComponentKind": "components",
    "ComponentLayout": "components",
    "ComponentCrop": "components",
    "FaceSketchDecomposition": "components",
    "DEPTH_ORDER": "components",
    "decompose": "components",
    "compose_preview": "components",
    # synthetic corpus
    "SyntheticStyle": "synthetic",
    "generate_synthetic_face": "synthetic",
    "write_corpus": "synthetic",
    "load_corpus": "synthetic",
    # embedders
    "LatentVector": "pca",
    "PcaModel": "pca",
    "FaceEmbedder": "pca",
    "fit_pca": "pca",
    "fit_face_pca": "pca",
    "reconstruction_mse": "pca",
    "save_face_embedder": "pca",
    "load_face_embedder": "pca",
    "AutoencoderConfig": "autoencoder",
    "train_autoencoder": "autoencoder",
    # manifold
    "ManifoldStore": "manifold",
    "FeatureSet": "manifold",
    "NeighborSet": "manifold",
    "WeightVector": "manifold",
    "build_store": "manifold",
    "knn": "manifold",
    "solve_lle_weights": "manifold",
    "project": "manifold",
    "blend": "manifold",
    "save_store": "manifold",
    "load_store": "manifold",
    # fusion and shadow
    "FeatureMap": "fusion",
    "FusedCanvas": "fusion",
    "map_latent": "fusion",
    "fuse": "fusion",
    "render_preview": "fusion",
    "synthesize": "fusion",
    "compute_shadow": "shadow",
    "ShadowOverlay": "shadow",
    # applications
    "morph_sequence": "apps",
    "recombine_components": "apps",
    # service
    "create_app": "service",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
