"""Acceptance gate: one test per shipping criterion, one pass/fail line each.

Each test prints a single human-readable verdict line with the measured
numbers, then asserts.  Tolerances are fixed here and must not be loosened
to make a failing criterion pass.
"""

import base64
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sketchmanifold.autoencoder import (
    Autoencoder,
    AutoencoderConfig,
    numeric_gradient,
    train_autoencoder,
)
from sketchmanifold.components import (
    DEPTH_ORDER,
    ComponentKind,
    ComponentLayout,
    compose_preview,
    decompose,
)
from sketchmanifold.fusion import FeatureMap, fuse, fuse_latents
from sketchmanifold.manifold import blend, nearest_neighbors, solve_lle_weights
from sketchmanifold.manifold import knn as store_knn
from sketchmanifold.manifold import project as store_project
from sketchmanifold.pca import LatentVector, fit_face_pca, reconstruction_mse
from sketchmanifold.raster import INK_LEVELS, SketchRaster
from sketchmanifold.service import create_app
from sketchmanifold.synthetic import face_stroke_program

from conftest import CORPUS_SEED


def check(name: str, ok: bool, detail: str) -> None:
    mark = "✅" if ok else "❌"
    print(f"  {mark} {name}: {detail}")
    assert ok, f"{name}: {detail}"


def constrained_lsq_oracle(query: np.ndarray, rows: np.ndarray) -> float:
    """Best squared residual via variable elimination + normal equations.

    Eliminate the last weight through the sum-to-one constraint, solve the
    unconstrained least-squares problem in the remaining K-1 variables.
    """
    pivot = rows[-1]
    a = (rows[:-1] - pivot).T
    b = query - pivot
    u = np.linalg.lstsq(a.T @ a, a.T @ b, rcond=None)[0]
    w = np.append(u, 1.0 - u.sum())
    r = query - w @ rows
    return float(r @ r)


def test_01_weight_solver_matches_constrained_lsq_oracle():
    rng = np.random.default_rng(2024)
    worst_sum = 0.0
    worst_gap = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        corpus = rng.normal(size=(200, 16))
        query = rng.normal(size=16)
        idx, _ = nearest_neighbors(corpus, query, 10)
        rows = corpus[idx]
        w = solve_lle_weights(query, rows).weights
        worst_sum = max(worst_sum, abs(float(w.sum()) - 1.0))
        r = query - w @ rows
        solver_residual = float(r @ r)
        oracle_residual = constrained_lsq_oracle(query, rows)
        gap = abs(solver_residual - oracle_residual) / max(oracle_residual, 1e-12)
        worst_gap = max(worst_gap, gap)
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-9 and worst_gap <= 1e-6 and elapsed < 5.0
    check(
        "weight solver vs constrained-LSQ oracle",
        ok,
        f"1000 instances, max|sum-1|={worst_sum:.3g}, "
        f"max relative residual gap={worst_gap:.3g}, {elapsed:.2f}s",
    )


def test_02_closed_form_weight_cases():
    sym = solve_lle_weights(
        np.zeros(2), np.array([[1.0, 0.0], [-1.0, 0.0]])
    ).weights
    sym_err = float(np.max(np.abs(sym - 0.5)))

    rows = np.array([[1.0, 0.0], [2.0, 0.0]])
    col = solve_lle_weights(np.zeros(2), rows).weights
    col_err = float(max(abs(col[0] - 2.0), abs(col[1] + 1.0)))
    proj_err = float(np.linalg.norm(col @ rows))

    ok = sym_err <= 1e-9 and col_err <= 1e-9 and proj_err <= 1e-9
    check(
        "closed-form weight cases",
        ok,
        f"symmetric err={sym_err:.3g}, collinear err={col_err:.3g}, "
        f"projection err={proj_err:.3g}",
    )


def test_03_projection_is_idempotent_on_corpus_latents(store):
    kinds = list(ComponentKind)
    worst = 0.0
    for i in range(100):
        kind = kinds[i % len(kinds)]
        row = store.features(kind).vectors[i]
        out = store_project(store, kind, LatentVector(kind, row))
        worst = max(worst, float(np.max(np.abs(out.values - row))))
    ok = worst <= 1e-9
    check(
        "projection idempotence on corpus latents",
        ok,
        f"100 samples across all components, max error={worst:.3g}",
    )


def test_04_blend_endpoints_and_affinity(store, embedder, decompositions):
    kind = ComponentKind.NOSE
    f_query = embedder.encode(kind, decompositions[3].crop(kind))
    f_proj = store_project(store, kind, f_query, k=6)

    end1 = np.array_equal(blend(f_query, f_proj, 1.0).values, f_query.values)
    end0 = np.array_equal(blend(f_query, f_proj, 0.0).values, f_proj.values)

    formula_err = 0.0
    for wb in (0.25, 0.5, 0.75):
        out = blend(f_query, f_proj, wb).values
        expected = wb * f_query.values + (1.0 - wb) * f_proj.values
        formula_err = max(formula_err, float(np.max(np.abs(out - expected))))
    mid = blend(f_query, f_proj, 0.5).values
    lo = blend(f_query, f_proj, 0.25).values
    hi = blend(f_query, f_proj, 0.75).values
    affine_err = float(np.max(np.abs((lo + hi) / 2.0 - mid)))

    ok = end1 and end0 and formula_err <= 1e-12 and affine_err <= 1e-12
    check(
        "blend endpoints and affinity",
        ok,
        f"endpoints bit-tight={end1 and end0}, formula err={formula_err:.3g}, "
        f"affinity err={affine_err:.3g} at wb in {{0.25, 0.5, 0.75}}",
    )


def test_05_reconstruction_error_non_increasing_in_dimension(decompositions):
    fits = {d: fit_face_pca(decompositions, d) for d in (4, 8, 16)}
    table = {}
    ok = True
    for kind in ComponentKind:
        crops = [dec.crop(kind) for dec in decompositions]
        errs = [reconstruction_mse(fits[d][kind], crops) for d in (4, 8, 16)]
        table[kind.slug] = errs
        ok = ok and errs[0] >= errs[1] >= errs[2]
    summary = ", ".join(
        f"{slug}: {e[0]:.2e}>={e[1]:.2e}>={e[2]:.2e}" for slug, e in table.items()
    )
    check(
        "reconstruction error non-increasing over d in {4, 8, 16}",
        ok,
        f"200-sample corpus, all five components ({summary})",
    )


def test_06_knn_exact_and_fast():
    rng = np.random.default_rng(7)
    vectors = rng.normal(size=(2000, 16))
    mismatches = 0
    for _ in range(1000):
        q = rng.normal(size=16)
        idx, _ = nearest_neighbors(vectors, q, 10)
        d2 = ((vectors - q) ** 2).sum(axis=1)
        oracle = np.lexsort((np.arange(len(d2)), d2))[:10]
        if not np.array_equal(idx, oracle):
            mismatches += 1

    # latency at full corpus scale; the search kernel is plain einsum over
    # row differences, which numpy runs on a single thread
    big = rng.standard_normal((16860, 512))
    queries = rng.standard_normal((100, 512))
    for q in queries[:3]:
        nearest_neighbors(big, q, 10)
    t0 = time.perf_counter()
    for q in queries:
        nearest_neighbors(big, q, 10)
    mean_ms = (time.perf_counter() - t0) / len(queries) * 1000.0

    ok = mismatches == 0 and mean_ms < 50.0
    check(
        "knn exactness and latency",
        ok,
        f"0/1000 oracle mismatches expected, got {mismatches}; "
        f"10-NN over 16860x512 mean {mean_ms:.1f} ms/query (budget 50 ms)",
    )


def test_07_fusion_depth_order_exact_at_every_overlap():
    def winner(layout, x, y):
        for kind in DEPTH_ORDER:
            x0, y0, x1, y1 = layout.window(kind)
            if x0 <= x < x1 and y0 <= y < y1:
                return kind
        return ComponentKind.REMAINDER

    layouts = {
        "default": ComponentLayout.default(),
        "overlapping eyes": ComponentLayout(
            width=32,
            height=32,
            windows={
                ComponentKind.LEFT_EYE: (4, 4, 18, 12),
                ComponentKind.RIGHT_EYE: (14, 4, 28, 12),
                ComponentKind.NOSE: (12, 10, 20, 20),
                ComponentKind.MOUTH: (10, 22, 22, 28),
            },
        ),
    }
    bad_pixels = 0
    overlap_pixels = 0
    for layout in layouts.values():
        maps = {
            kind: FeatureMap(
                kind,
                np.full((1, *layout.window_shape(kind)), float(kind.value)),
            )
            for kind in ComponentKind
        }
        canvas = fuse(maps, layout)
        covers = np.zeros((layout.height, layout.width), dtype=int)
        for kind in ComponentKind:
            x0, y0, x1, y1 = layout.window(kind)
            covers[y0:y1, x0:x1] += 1
        for y in range(layout.height):
            for x in range(layout.width):
                expected = winner(layout, x, y)
                if covers[y, x] > 1:
                    overlap_pixels += 1
                if (
                    canvas.provenance[y, x] != expected.value
                    or canvas.data[0, y, x] != float(expected.value)
                ):
                    bad_pixels += 1
    ok = bad_pixels == 0 and overlap_pixels > 0
    check(
        "fusion depth order and provenance",
        ok,
        f"{overlap_pixels} contested pixels across 2 layouts, "
        f"{bad_pixels} wrong",
    )


def test_08_morph_endpoints_and_midpoint(embedder, decompositions):
    from sketchmanifold.apps import morph_latents, morph_sequence
    from sketchmanifold.fusion import synthesize

    a, b = decompositions[3], decompositions[177]
    frames = morph_sequence(embedder, a, b, steps=7)
    expected_a = synthesize(embedder, embedder.encode_face(a), a.layout)
    expected_b = synthesize(embedder, embedder.encode_face(b), b.layout)
    endpoints_exact = np.array_equal(frames[0].ink, expected_a.ink) and np.array_equal(
        frames[-1].ink, expected_b.ink
    )

    la = embedder.encode_face(a)
    lb = embedder.encode_face(b)
    mid = morph_latents(embedder, a, b, steps=3)[1]
    midpoint_exact = all(
        np.array_equal(mid[kind].values, (la[kind].values + lb[kind].values) / 2.0)
        for kind in ComponentKind
    )
    ok = endpoints_exact and midpoint_exact
    check(
        "morph endpoints and midpoint latent",
        ok,
        f"endpoints bit-identical={endpoints_exact}, "
        f"midpoint equals exact average={midpoint_exact}",
    )


def test_09_decompose_compose_round_trip_and_mass_conservation(corpus, layout):
    disjoint = ComponentLayout(
        width=48,
        height=48,
        windows={
            ComponentKind.LEFT_EYE: (2, 2, 14, 12),
            ComponentKind.RIGHT_EYE: (30, 2, 44, 12),
            ComponentKind.NOSE: (18, 16, 30, 28),
            ComponentKind.MOUTH: (12, 32, 36, 42),
        },
    )
    rng = np.random.default_rng(17)
    ink = np.zeros((48, 48))
    for kind, (x0, y0, x1, y1) in disjoint.windows.items():
        ink[y0:y1, x0:x1] = (
            np.rint(rng.random((y1 - y0, x1 - x0)) * INK_LEVELS) / INK_LEVELS
        )
    sketch = SketchRaster(ink)
    round_trip = np.array_equal(
        compose_preview(decompose(sketch, disjoint)).ink, sketch.ink
    )

    # overlapping default layout: remainder erasure must move ink, never
    # create or destroy it (pixelwise partition; integer mass on the 1/255
    # grid)
    _, rasters, _ = corpus
    sample = rasters[29]
    decomp = decompose(sample, layout)
    mask = np.zeros(sample.ink.shape, dtype=bool)
    for kind in (ComponentKind.LEFT_EYE, ComponentKind.RIGHT_EYE,
                 ComponentKind.NOSE, ComponentKind.MOUTH):
        x0, y0, x1, y1 = layout.window(kind)
        mask[y0:y1, x0:x1] = True
    remainder = decomp.crop(ComponentKind.REMAINDER).raster.ink
    rebuilt = remainder.copy()
    rebuilt[mask] = sample.ink[mask]
    partition_exact = np.array_equal(rebuilt, sample.ink) and np.all(
        remainder[mask] == 0.0
    )
    levels = np.rint(sample.ink * INK_LEVELS).astype(np.int64)
    rem_levels = np.rint(remainder * INK_LEVELS).astype(np.int64)
    mass_exact = rem_levels.sum() == levels[~mask].sum()

    ok = round_trip and partition_exact and mass_exact
    check(
        "decompose/compose round trip and mass conservation",
        ok,
        f"disjoint round trip exact={round_trip}, "
        f"partition exact={partition_exact}, integer ink mass exact={mass_exact}",
    )


def test_10_exact_corpus_sketch_through_the_service(
    store, embedder, layout, corpus, decompositions, style
):
    ids, rasters, _ = corpus
    sample_index = 42
    app = create_app(store, layout)
    with TestClient(app) as client:
        sid = client.post("/sessions").json()["session_id"]
        t0 = time.perf_counter()
        for stroke in face_stroke_program(CORPUS_SEED + sample_index, layout, style):
            resp = client.post(
                f"/sessions/{sid}/strokes",
                json={
                    "points": [[float(x), float(y)] for x, y in stroke.points],
                    "width": stroke.width,
                },
            )
            assert resp.status_code == 200
        replay_s = time.perf_counter() - t0

        canvas_b64 = client.get(f"/sessions/{sid}/canvas").json()["pgm"]
        from sketchmanifold.raster import parse_pgm

        canvas = parse_pgm(base64.b64decode(canvas_b64))
        replay_exact = np.array_equal(canvas.ink, rasters[sample_index].ink)

        payload = client.get(f"/sessions/{sid}/synthesis?precision=float").json()
        got = np.frombuffer(
            base64.b64decode(payload["preclamp_f64"]), dtype="<f8"
        ).reshape(layout.height, layout.width)

    expected = fuse_latents(
        embedder, embedder.encode_face(decompositions[sample_index]), layout
    ).data[0]
    err = float(np.max(np.abs(got - expected)))
    ok = replay_exact and err <= 1e-6
    check(
        "exact corpus sketch through the service at wb=0",
        ok,
        f"stroke replay bit-exact={replay_exact}, max pre-clamp pixel "
        f"error={err:.3g} (budget 1e-6), {replay_s * 1000:.0f} ms replay",
    )


def test_11_autoencoder_gradients_and_training(decompositions):
    tiny = AutoencoderConfig(latent_dim=4, channels=(2, 3), epochs=2, batch_size=4)
    net = Autoencoder(ComponentKind.LEFT_EYE, crop_shape=(9, 10), config=tiny)
    rng = np.random.default_rng(5)
    x = rng.random((2, 1, 9, 10))
    net.loss_and_gradients(x)
    worst = 0.0
    for layer in net.layers:
        for name, param in layer.params.items():
            flat = param.reshape(-1)
            picks = rng.choice(flat.size, size=min(4, flat.size), replace=False)
            for flat_index in picks:
                index = np.unravel_index(int(flat_index), param.shape)
                numeric = numeric_gradient(net, x, layer, name, index)
                analytic = layer.grads[name][index]
                scale = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / scale)

    config = AutoencoderConfig()
    crops = [d.crop(ComponentKind.LEFT_EYE) for d in decompositions[:64]]
    result = train_autoencoder(crops, config)
    trained = result.epoch_losses[-1] < result.initial_loss

    ok = worst <= 1e-4 and trained and config.epochs == 5
    check(
        "autoencoder gradients and training",
        ok,
        f"worst per-layer gradient error={worst:.3g} (budget 1e-4); "
        f"64-sample loss {result.initial_loss:.4f} -> {result.epoch_losses[-1]:.4f} "
        f"after {config.epochs} epochs (beta1={config.beta1}, "
        f"beta2={config.beta2}, lr={config.learning_rate})",
    )
