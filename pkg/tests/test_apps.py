import numpy as np
import pytest

from sketchmanifold.apps import (
    interpolate_latents,
    morph_latents,
    morph_sequence,
    recombine_components,
    save_frames,
)
from sketchmanifold.components import ComponentKind, ComponentLayout, decompose
from sketchmanifold.errors import InvalidInputError
from sketchmanifold.fusion import synthesize
from sketchmanifold.raster import SketchRaster, read_pgm


@pytest.fixture(scope="module")
def pair(decompositions):
    return decompositions[5], decompositions[95]


def test_morph_endpoints_are_bit_identical(embedder, pair, corpus):
    a, b = pair
    frames = morph_sequence(embedder, a, b, steps=5)
    assert len(frames) == 5
    expected_a = synthesize(embedder, embedder.encode_face(a), a.layout)
    expected_b = synthesize(embedder, embedder.encode_face(b), b.layout)
    assert np.array_equal(frames[0].ink, expected_a.ink)
    assert np.array_equal(frames[-1].ink, expected_b.ink)


def test_morph_midpoint_is_the_exact_latent_average(embedder, pair):
    a, b = pair
    latents = morph_latents(embedder, a, b, steps=3)
    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    for kind in ComponentKind:
        mid = (la[kind].values + lb[kind].values) / 2.0
        assert np.array_equal(latents[1][kind].values, mid)


def test_morph_is_affine_in_t(embedder, pair):
    a, b = pair
    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    quarter = interpolate_latents(la, lb, 0.25)
    threequarter = interpolate_latents(la, lb, 0.75)
    half = interpolate_latents(la, lb, 0.5)
    for kind in ComponentKind:
        avg = (quarter[kind].values + threequarter[kind].values) / 2.0
        assert np.max(np.abs(avg - half[kind].values)) < 1e-15


def test_interpolation_endpoints_pass_latents_through(embedder, pair):
    a, b = pair
    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    at0 = interpolate_latents(la, lb, 0.0)
    at1 = interpolate_latents(la, lb, 1.0)
    for kind in ComponentKind:
        assert np.array_equal(at0[kind].values, la[kind].values)
        assert np.array_equal(at1[kind].values, lb[kind].values)


def test_per_component_interpolation_factors(embedder, pair):
    a, b = pair
    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    t = {kind: 0.0 for kind in ComponentKind}
    t[ComponentKind.MOUTH] = 1.0
    mixed = interpolate_latents(la, lb, t)
    assert np.array_equal(mixed[ComponentKind.MOUTH].values, lb[ComponentKind.MOUTH].values)
    for kind in ComponentKind:
        if kind is not ComponentKind.MOUTH:
            assert np.array_equal(mixed[kind].values, la[kind].values)


def test_interpolation_rejects_out_of_range_t(embedder, pair):
    a, b = pair
    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    with pytest.raises(InvalidInputError):
        interpolate_latents(la, lb, 1.5)
    with pytest.raises(InvalidInputError):
        interpolate_latents(la, lb, -0.1)


def test_morph_needs_two_steps(embedder, pair):
    a, b = pair
    with pytest.raises(InvalidInputError):
        morph_latents(embedder, a, b, steps=1)


def test_morph_rejects_layout_mismatch(embedder, decompositions, corpus, style):
    from sketchmanifold.synthetic import generate_synthetic_face

    other_layout = ComponentLayout.default(width=32, height=32)
    other = decompose(
        generate_synthetic_face(1, other_layout, style), other_layout
    )
    with pytest.raises(InvalidInputError):
        morph_latents(embedder, decompositions[0], other, steps=3)


def test_recombination_from_one_source_is_its_reconstruction(
    embedder, decompositions
):
    d = decompositions[33]
    out = recombine_components(embedder, {kind: d for kind in ComponentKind})
    expected = synthesize(embedder, embedder.encode_face(d), d.layout)
    assert np.array_equal(out.ink, expected.ink)


def test_recombination_takes_each_component_from_its_source(
    embedder, decompositions, layout
):
    a, b = decompositions[5], decompositions[95]
    sources = {kind: b for kind in ComponentKind}
    sources[ComponentKind.LEFT_EYE] = a
    out = recombine_components(embedder, sources)

    latents = embedder.encode_face(b)
    latents[ComponentKind.LEFT_EYE] = embedder.encode_face(a)[ComponentKind.LEFT_EYE]
    expected = synthesize(embedder, latents, layout)
    assert np.array_equal(out.ink, expected.ink)


def test_recombination_requires_all_components(embedder, decompositions):
    sources = {kind: decompositions[0] for kind in ComponentKind}
    del sources[ComponentKind.NOSE]
    with pytest.raises(InvalidInputError):
        recombine_components(embedder, sources)


def test_saved_frames_round_trip(tmp_path, embedder, pair):
    a, b = pair
    frames = morph_sequence(embedder, a, b, steps=4)
    paths = save_frames(frames, tmp_path, prefix="m")
    assert [p.name for p in paths] == [f"m_{i:04d}.pgm" for i in range(4)]
    for path, frame in zip(paths, frames):
        back = read_pgm(path)
        # saved frames are quantized to the 1/255 grid
        assert np.array_equal(
            back.ink, np.rint(np.asarray(frame.ink) * 255.0) / 255.0
        )
