"""Shared fixtures: one synthetic corpus, one embedder, one store per session.

Everything downstream (manifold, shadow, service, acceptance) reuses these so
the suite pays the generation and fitting cost once.
"""

import pytest

from sketchmanifold.components import ComponentLayout, decompose
from sketchmanifold.manifold import build_store
from sketchmanifold.pca import fit_face_pca
from sketchmanifold.synthetic import (
    SyntheticStyle,
    face_tag,
    generate_synthetic_face,
    sample_name,
)

CORPUS_SEED = 11
CORPUS_SIZE = 200
LATENT_DIM = 16
DEFAULT_K = 10


@pytest.fixture(scope="session")
def layout():
    return ComponentLayout.default()


@pytest.fixture(scope="session")
def style():
    return SyntheticStyle()


@pytest.fixture(scope="session")
def corpus(layout, style):
    """(sample_ids, rasters, tags) for the shared 200-sketch corpus."""
    rasters = [
        generate_synthetic_face(CORPUS_SEED + i, layout, style)
        for i in range(CORPUS_SIZE)
    ]
    ids = [sample_name(i) for i in range(CORPUS_SIZE)]
    tags = [face_tag(CORPUS_SEED + i, style) for i in range(CORPUS_SIZE)]
    return ids, rasters, tags


@pytest.fixture(scope="session")
def decompositions(corpus, layout):
    _, rasters, _ = corpus
    return [decompose(raster, layout) for raster in rasters]


@pytest.fixture(scope="session")
def embedder(decompositions):
    return fit_face_pca(decompositions, LATENT_DIM)


@pytest.fixture(scope="session")
def store(embedder, decompositions, corpus):
    ids, _, tags = corpus
    return build_store(
        embedder,
        decompositions,
        sample_ids=ids,
        tags=tags,
        default_k=DEFAULT_K,
    )
