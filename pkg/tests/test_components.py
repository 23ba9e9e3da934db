import numpy as np
import pytest

from sketchmanifold.components import (
    DEPTH_ORDER,
    FACIAL_KINDS,
    ComponentCrop,
    ComponentKind,
    ComponentLayout,
    FaceSketchDecomposition,
    compose_preview,
    decompose,
    load_layout,
    save_layout,
)
from sketchmanifold.errors import CorruptFileError, InvalidInputError
from sketchmanifold.raster import INK_LEVELS, SketchRaster


def disjoint_layout():
    return ComponentLayout(
        width=40,
        height=40,
        windows={
            ComponentKind.LEFT_EYE: (2, 2, 12, 10),
            ComponentKind.RIGHT_EYE: (20, 2, 30, 10),
            ComponentKind.NOSE: (14, 14, 26, 24),
            ComponentKind.MOUTH: (10, 28, 30, 36),
        },
    )


def test_kind_order_and_slugs():
    assert [k.value for k in ComponentKind] == [1, 2, 3, 4, 5]
    assert ComponentKind.LEFT_EYE.slug == "left_eye"
    assert ComponentKind.REMAINDER not in FACIAL_KINDS
    assert set(DEPTH_ORDER) == set(ComponentKind)
    # eyes sit above nose, nose above mouth, everything above remainder
    order = list(DEPTH_ORDER)
    assert order.index(ComponentKind.LEFT_EYE) < order.index(ComponentKind.NOSE)
    assert order.index(ComponentKind.NOSE) < order.index(ComponentKind.MOUTH)
    assert order[-1] is ComponentKind.REMAINDER


def test_default_layout_windows_are_inside_and_overlap():
    layout = ComponentLayout.default()
    assert layout.width == 64 and layout.height == 64
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        assert 0 <= x0 < x1 <= layout.width
        assert 0 <= y0 < y1 <= layout.height
    # the nose window intersects both eye windows and the mouth window
    nx0, ny0, nx1, ny1 = layout.window(ComponentKind.NOSE)
    for other in (ComponentKind.LEFT_EYE, ComponentKind.RIGHT_EYE, ComponentKind.MOUTH):
        ox0, oy0, ox1, oy1 = layout.window(other)
        assert max(nx0, ox0) < min(nx1, ox1)
        assert max(ny0, oy0) < min(ny1, oy1)


def test_remainder_window_is_full_canvas():
    layout = ComponentLayout.default()
    assert layout.window(ComponentKind.REMAINDER) == (0, 0, 64, 64)
    assert layout.window_shape(ComponentKind.REMAINDER) == (64, 64)


def test_decompose_crops_are_exact_copies(corpus, layout):
    _, rasters, _ = corpus
    sketch = rasters[17]
    decomp = decompose(sketch, layout)
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        assert np.array_equal(decomp.crop(kind).raster.ink, sketch.ink[y0:y1, x0:x1])


def test_remainder_is_erased_inside_facial_windows(corpus, layout):
    _, rasters, _ = corpus
    decomp = decompose(rasters[3], layout)
    remainder = decomp.crop(ComponentKind.REMAINDER).raster.ink
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        assert np.all(remainder[y0:y1, x0:x1] == 0.0)


def test_decomposition_partitions_every_pixel(corpus, layout):
    # remainder plus the union mask of facial windows reproduces the input
    # bitwise: each pixel is either copied or zeroed, never recomputed
    _, rasters, _ = corpus
    sketch = rasters[42]
    decomp = decompose(sketch, layout)
    mask = np.zeros(sketch.ink.shape, dtype=bool)
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        mask[y0:y1, x0:x1] = True
    rebuilt = decomp.crop(ComponentKind.REMAINDER).raster.ink.copy()
    rebuilt[mask] = sketch.ink[mask]
    assert np.array_equal(rebuilt, sketch.ink)


def test_ink_mass_is_conserved_in_integer_levels(corpus, layout):
    # on the 1/255 grid the masked-out ink reappears exactly in the crops
    _, rasters, _ = corpus
    sketch = rasters[7]
    decomp = decompose(sketch, layout)
    mask = np.zeros(sketch.ink.shape, dtype=bool)
    for kind in FACIAL_KINDS:
        x0, y0, x1, y1 = layout.window(kind)
        mask[y0:y1, x0:x1] = True
    levels = np.rint(sketch.ink * INK_LEVELS).astype(np.int64)
    remainder_levels = np.rint(
        decomp.crop(ComponentKind.REMAINDER).raster.ink * INK_LEVELS
    ).astype(np.int64)
    assert remainder_levels.sum() == levels[~mask].sum()


def test_compose_inverts_decompose(corpus, layout):
    _, rasters, _ = corpus
    for sketch in rasters[:5]:
        back = compose_preview(decompose(sketch, layout))
        assert np.array_equal(back.ink, sketch.ink)


def test_compose_inverts_decompose_on_disjoint_windows():
    layout = disjoint_layout()
    rng = np.random.default_rng(9)
    sketch = SketchRaster(np.rint(rng.random((40, 40)) * INK_LEVELS) / INK_LEVELS)
    back = compose_preview(decompose(sketch, layout))
    assert np.array_equal(back.ink, sketch.ink)


def test_compose_ignores_crop_insertion_order(corpus, layout):
    _, rasters, _ = corpus
    decomp = decompose(rasters[9], layout)
    shuffled = FaceSketchDecomposition(
        layout=layout,
        crops={k: decomp.crops[k] for k in reversed(list(ComponentKind))},
    )
    assert np.array_equal(
        compose_preview(shuffled).ink, compose_preview(decomp).ink
    )


def test_layout_round_trip(tmp_path, layout):
    path = tmp_path / "layout.txt"
    save_layout(layout, path)
    back = load_layout(path)
    assert back == layout


def test_layout_file_rejects_garbage(tmp_path):
    path = tmp_path / "layout.txt"
    path.write_text("not a layout\n")
    with pytest.raises(CorruptFileError):
        load_layout(path)


def test_layout_rejects_out_of_bounds_window():
    with pytest.raises(InvalidInputError):
        ComponentLayout(
            width=32,
            height=32,
            windows={
                ComponentKind.LEFT_EYE: (0, 0, 40, 8),
                ComponentKind.RIGHT_EYE: (16, 0, 30, 8),
                ComponentKind.NOSE: (8, 8, 24, 16),
                ComponentKind.MOUTH: (8, 20, 24, 28),
            },
        )


def test_layout_rejects_empty_window():
    with pytest.raises(InvalidInputError):
        ComponentLayout(
            width=32,
            height=32,
            windows={
                ComponentKind.LEFT_EYE: (4, 4, 4, 8),
                ComponentKind.RIGHT_EYE: (16, 0, 30, 8),
                ComponentKind.NOSE: (8, 8, 24, 16),
                ComponentKind.MOUTH: (8, 20, 24, 28),
            },
        )


def test_crop_kind_shape_mismatch_rejected(layout):
    wrong = SketchRaster(np.zeros((3, 3)))
    with pytest.raises(InvalidInputError):
        FaceSketchDecomposition(
            layout=layout,
            crops={
                **{
                    kind: ComponentCrop(kind, SketchRaster(
                        np.zeros(layout.window_shape(kind))
                    ))
                    for kind in ComponentKind
                    if kind is not ComponentKind.MOUTH
                },
                ComponentKind.MOUTH: ComponentCrop(ComponentKind.MOUTH, wrong),
            },
        )


def test_decompose_rejects_canvas_mismatch(layout):
    small = SketchRaster(np.zeros((16, 16)))
    with pytest.raises(InvalidInputError):
        decompose(small, layout)
