import numpy as np
import pytest

from sketchmanifold.components import ComponentKind
from sketchmanifold.errors import InvalidInputError
from sketchmanifold.manifold import knn, load_store, save_store
from sketchmanifold.pca import fit_face_pca
from sketchmanifold.raster import SketchRaster
from sketchmanifold.shadow import (
    DISTANCE_GUARD,
    compute_shadow,
    save_overlay,
    shadow_report,
    weight_entropy,
)
from sketchmanifold.synthetic import generate_synthetic_face


@pytest.fixture()
def blank_sketch(layout):
    return SketchRaster.blank(layout.width, layout.height)


@pytest.fixture(scope="module")
def novel_sketch(layout, style):
    # seed far outside the corpus range, so no component matches exactly
    return generate_synthetic_face(100_000, layout, style)


def test_weight_entropy_extremes():
    one_hot = np.zeros(8)
    one_hot[3] = 1.0
    assert weight_entropy(one_hot) == 0.0
    n = 30
    assert weight_entropy(np.full(n, 1.0 / n)) == pytest.approx(np.log(n), abs=1e-12)


def test_entropy_rejects_bad_weights():
    with pytest.raises(InvalidInputError):
        weight_entropy(np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        weight_entropy(np.array([1.5, -0.5]))


def test_blank_canvas_shows_corpus_averages(store, embedder, layout, blank_sketch):
    overlay = compute_shadow(store, embedder, blank_sketch, layout)
    for kind in ComponentKind:
        shadow = overlay.component(kind)
        assert shadow.blank
        bank = store.crop_bank[kind]
        expected = bank.mean(axis=0).reshape(layout.window_shape(kind))
        assert np.allclose(shadow.raster.ink, expected, atol=1e-12)
        assert shadow.entropy == pytest.approx(np.log(bank.shape[0]), abs=1e-9)


def test_exact_corpus_sample_casts_its_own_shadow(
    store, embedder, layout, corpus, decompositions
):
    ids, rasters, _ = corpus
    overlay = compute_shadow(store, embedder, rasters[57], layout)
    for kind in ComponentKind:
        shadow = overlay.component(kind)
        assert not shadow.blank
        assert shadow.neighbor_ids[0] == ids[57]
        assert shadow.weights[0] == 1.0
        assert np.array_equal(
            shadow.raster.ink, decompositions[57].crop(kind).raster.ink
        )
        assert shadow.entropy == 0.0
    # every overlapping window shows the same source pixels, so the
    # composite reproduces the sketch bitwise
    assert np.array_equal(overlay.composite.ink, rasters[57].ink)


def test_shadow_stays_in_ink_range(store, embedder, layout, novel_sketch):
    overlay = compute_shadow(store, embedder, novel_sketch, layout)
    assert overlay.composite.ink.min() >= 0.0
    assert overlay.composite.ink.max() <= 1.0
    for kind in ComponentKind:
        raster = overlay.component(kind).raster
        assert raster.ink.min() >= 0.0 and raster.ink.max() <= 1.0


def test_inverse_distance_weighting(store, embedder, layout, novel_sketch):
    from sketchmanifold.components import decompose

    overlay = compute_shadow(store, embedder, novel_sketch, layout, k=6)
    decomp = decompose(novel_sketch, layout)
    for kind in ComponentKind:
        latent = embedder.encode(kind, decomp.crop(kind))
        neighbors = knn(store, kind, latent, k=6)
        raw = 1.0 / (neighbors.distances + DISTANCE_GUARD)
        expected = raw / raw.sum()
        assert np.allclose(overlay.component(kind).weights, expected, atol=1e-12)


def test_uniform_blending_flag(store, embedder, layout, novel_sketch):
    overlay = compute_shadow(
        store, embedder, novel_sketch, layout, k=5, uniform_blending=True
    )
    for kind in ComponentKind:
        shadow = overlay.component(kind)
        assert np.allclose(shadow.weights, 0.2, atol=1e-15)
        assert shadow.entropy == pytest.approx(np.log(5), abs=1e-12)


def test_composite_is_max_of_components(store, embedder, layout, novel_sketch):
    overlay = compute_shadow(store, embedder, novel_sketch, layout)
    manual = np.zeros((layout.height, layout.width))
    for kind in ComponentKind:
        x0, y0, x1, y1 = layout.window(kind)
        region = manual[y0:y1, x0:x1]
        np.maximum(region, overlay.component(kind).raster.ink, out=region)
    assert np.array_equal(overlay.composite.ink, manual)


def test_shadow_is_deterministic(store, embedder, layout, novel_sketch):
    a = compute_shadow(store, embedder, novel_sketch, layout)
    b = compute_shadow(store, embedder, novel_sketch, layout)
    for kind in ComponentKind:
        assert np.array_equal(
            a.component(kind).raster.ink, b.component(kind).raster.ink
        )


def test_tag_filter_restricts_neighbors(store, embedder, layout, novel_sketch, corpus):
    ids, _, tags = corpus
    tagged = {ids[i] for i, t in enumerate(tags) if t == "narrow"}
    overlay = compute_shadow(
        store, embedder, novel_sketch, layout, k=4, tag_filter="narrow"
    )
    for kind in ComponentKind:
        assert set(overlay.component(kind).neighbor_ids) <= tagged


def test_blank_with_tag_filter_averages_the_subset(
    store, embedder, layout, blank_sketch, corpus
):
    _, _, tags = corpus
    rows = np.flatnonzero(np.asarray(tags) == "wide")
    overlay = compute_shadow(
        store, embedder, blank_sketch, layout, tag_filter="wide"
    )
    kind = ComponentKind.MOUTH
    expected = store.crop_bank[kind][rows].mean(axis=0)
    got = overlay.component(kind).raster.ink.ravel()
    assert np.allclose(got, expected, atol=1e-12)
    assert overlay.component(kind).entropy == pytest.approx(
        np.log(rows.size), abs=1e-9
    )


def test_report_format(store, embedder, layout, novel_sketch):
    overlay = compute_shadow(store, embedder, novel_sketch, layout, k=3)
    text = shadow_report(overlay)
    lines = text.strip().splitlines()
    assert lines[0] == "k=3"
    for kind in ComponentKind:
        assert f"{kind.slug}.blank=0" in lines
        weights = [
            float(line.split("=")[1])
            for line in lines
            if line.startswith(f"{kind.slug}.neighbor.") and ".weight" in line
        ]
        assert len(weights) == 3
        assert weights == sorted(weights, reverse=True)


def test_save_overlay_files(tmp_path, store, embedder, layout, novel_sketch):
    overlay = compute_shadow(store, embedder, novel_sketch, layout)
    written = save_overlay(overlay, tmp_path, prefix="sh")
    names = {p.name for p in written}
    expected = {f"sh_{kind.slug}.pgm" for kind in ComponentKind}
    expected |= {"sh_composite.pgm", "sh_neighbors.txt"}
    assert names == expected
    for path in written:
        assert path.exists() and path.stat().st_size > 0


def test_shadow_requires_crop_bank(tmp_path, store, embedder, layout, blank_sketch):
    path = tmp_path / "s.fmst"
    save_store(store, path)
    bare = load_store(path)
    bare.attach_embedder(embedder)
    with pytest.raises(InvalidInputError):
        compute_shadow(bare, embedder, blank_sketch, layout)


def test_shadow_rejects_foreign_embedder(
    store, layout, blank_sketch, decompositions
):
    other = fit_face_pca(decompositions, 8)
    with pytest.raises(InvalidInputError):
        compute_shadow(store, other, blank_sketch, layout)


def test_shadow_rejects_bad_k(store, embedder, layout, blank_sketch):
    with pytest.raises(InvalidInputError):
        compute_shadow(store, embedder, blank_sketch, layout, k=0)
