"""Batch command surface.

Subcommands: corpus-gen, fit, build, project, shadow, morph, recombine,
knn-bench, k-sweep, dim-sweep, serve.  Every command is reproducible
from its flags plus the seed, writes name=value reports (floats at 9
significant digits), and the sweep/bench commands render a matplotlib
figure next to the report.

Heavy imports happen inside the handlers: knn-bench pins the BLAS/OpenMP
thread count to 1 before numpy is first loaded so its latency numbers
are comparable across machines.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import SketchManifoldError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _parse_canvas(text: str) -> tuple[int, int]:
    try:
        w, _, h = text.lower().partition("x")
        width, height = int(w), int(h)
    except ValueError:
        raise SketchManifoldError(f"bad canvas spec {text!r}, expected WxH")
    if width < 1 or height < 1:
        raise SketchManifoldError(f"bad canvas spec {text!r}, expected WxH")
    return width, height


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise SketchManifoldError(f"bad {flag} list {text!r}")
    if not values:
        raise SketchManifoldError(f"empty {flag} list")
    return values


def _load_decomposed_corpus(corpus_dir: str):
    from .components import decompose
    from .synthetic import load_corpus

    ids, rasters, tags, layout = load_corpus(corpus_dir)
    decomps = [decompose(raster, layout) for raster in rasters]
    return ids, decomps, tags, layout


def _load_store_with_models(store_path: str, models_dir: str):
    from .manifold import load_store
    from .pca import load_face_embedder

    store = load_store(store_path)
    embedder = load_face_embedder(models_dir)
    store.attach_embedder(embedder)
    return store, embedder


def _corpus_decomposition(corpus_dir: str, sample_id: str):
    from .components import decompose
    from .raster import read_pgm
    from .synthetic import load_corpus

    path = Path(corpus_dir) / f"{sample_id}.pgm"
    if not path.exists():
        raise SketchManifoldError(f"no sample {sample_id!r} under {corpus_dir}")
    _, _, _, layout = load_corpus(corpus_dir)
    return decompose(read_pgm(path), layout), layout


def cmd_corpus_gen(args) -> int:
    from .components import ComponentLayout
    from .synthetic import SyntheticStyle, write_corpus

    width, height = _parse_canvas(args.canvas)
    layout = ComponentLayout.default(width, height)
    style = SyntheticStyle(stroke_width=args.stroke_width)
    ids = write_corpus(args.out, args.n, args.seed, layout, style)
    print(f"wrote {len(ids)} samples to {args.out}")
    return 0


def cmd_fit(args) -> int:
    from .components import ComponentKind
    from .pca import fit_face_pca, reconstruction_mse, save_face_embedder
    from .reports import write_report

    ids, decomps, _, _ = _load_decomposed_corpus(args.corpus)
    embedder = fit_face_pca(decomps, args.d)
    save_face_embedder(embedder, args.out)
    pairs: list[tuple[str, object]] = [("samples", len(ids)), ("d", args.d)]
    for kind in ComponentKind:
        crops = [dec.crop(kind) for dec in decomps]
        pairs.append((f"{kind.slug}.mse", reconstruction_mse(embedder[kind], crops)))
    report = write_report(Path(args.out) / "fit_report.txt", pairs)
    print(f"fitted embedder ({len(ids)} samples, d={args.d}) -> {args.out}")
    print(f"report: {report}")
    return 0


def cmd_build(args) -> int:
    from .manifold import build_store, save_store
    from .pca import load_face_embedder

    ids, decomps, tags, _ = _load_decomposed_corpus(args.corpus)
    embedder = load_face_embedder(args.models)
    store = build_store(
        embedder, decomps, sample_ids=ids,
        tags=tags if any(tags) else None, default_k=args.k,
    )
    save_store(store, args.out)
    print(
        f"built store: {len(ids)} samples, K={args.k}, "
        f"digest {store.embedder_digest.hex()[:16]} -> {args.out}"
    )
    return 0


def cmd_project(args) -> int:
    from .components import ComponentKind, decompose
    from .fusion import dump_canvas, fuse_latents
    from .manifold import blend, project_detailed
    from .raster import read_pgm
    from .reports import write_report
    from .synthetic import load_corpus

    import numpy as np

    store, embedder = _load_store_with_models(args.store, args.models)
    _, _, _, layout = load_corpus(args.corpus)
    sketch = read_pgm(args.sketch)
    if (sketch.height, sketch.width) != (layout.height, layout.width):
        raise SketchManifoldError(
            f"sketch is {sketch.width}x{sketch.height}, "
            f"layout expects {layout.width}x{layout.height}"
        )
    decomp = decompose(sketch, layout)
    pairs: list[tuple[str, object]] = [("wb", args.wb), ("k", args.k or store.default_k)]
    latents = {}
    for kind in ComponentKind:
        f_query = embedder.encode(kind, decomp.crop(kind))
        f_proj, neighbors, weights = project_detailed(
            store, kind, f_query, k=args.k, tag_filter=args.tag
        )
        latents[kind] = blend(f_query, f_proj, args.wb)
        residual = float(np.linalg.norm(f_query.values - f_proj.values))
        pairs.append((f"{kind.slug}.residual", residual))
        fs = store.features(kind)
        for rank, (idx, weight) in enumerate(
            zip(neighbors.indices, weights.weights)
        ):
            pairs.append((f"{kind.slug}.neighbor.{rank}.id", fs.sample_ids[idx]))
            pairs.append((f"{kind.slug}.neighbor.{rank}.weight", float(weight)))
    fused = fuse_latents(embedder, latents, layout, channels=args.channels)
    written = dump_canvas(fused, args.out, prefix="synthesis")
    report = write_report(Path(args.out) / "project_report.txt", pairs)
    print(f"synthesis -> {written[0]}")
    print(f"report: {report}")
    return 0


def cmd_shadow(args) -> int:
    from .raster import read_pgm
    from .shadow import compute_shadow, save_overlay
    from .synthetic import load_corpus
    from .components import decompose

    store, embedder = _load_store_with_models(args.store, args.models)
    _, rasters, _, layout = load_corpus(args.corpus)
    store.attach_crops([decompose(r, layout) for r in rasters])
    sketch = read_pgm(args.sketch)
    overlay = compute_shadow(
        store, embedder, sketch, layout,
        k=args.k, uniform_blending=args.uniform, tag_filter=args.tag,
    )
    written = save_overlay(overlay, args.out)
    print(f"shadow overlay ({len(written)} files) -> {args.out}")
    return 0


def cmd_morph(args) -> int:
    from .apps import morph_sequence, save_frames
    from .pca import load_face_embedder
    from .reports import write_report

    embedder = load_face_embedder(args.models)
    decomp_a, _ = _corpus_decomposition(args.corpus, args.a)
    decomp_b, _ = _corpus_decomposition(args.corpus, args.b)
    frames = morph_sequence(embedder, decomp_a, decomp_b, args.steps)
    paths = save_frames(frames, args.out, prefix="morph")
    write_report(
        Path(args.out) / "morph_report.txt",
        [("a", args.a), ("b", args.b), ("steps", args.steps), ("frames", len(paths))],
    )
    print(f"{len(paths)} morph frames -> {args.out}")
    return 0


def cmd_recombine(args) -> int:
    from .apps import recombine_components
    from .components import ComponentKind
    from .pca import load_face_embedder
    from .raster import write_pgm

    embedder = load_face_embedder(args.models)
    chosen = {
        ComponentKind.LEFT_EYE: args.left_eye,
        ComponentKind.RIGHT_EYE: args.right_eye,
        ComponentKind.NOSE: args.nose,
        ComponentKind.MOUTH: args.mouth,
        ComponentKind.REMAINDER: args.remainder,
    }
    sources = {}
    for kind, sample_id in chosen.items():
        sources[kind], _ = _corpus_decomposition(args.corpus, sample_id)
    raster = recombine_components(embedder, sources)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(raster, out)
    print(f"recombined face -> {out}")
    return 0


def cmd_knn_bench(args) -> int:
    # Thread pinning happened in main() before numpy was ever imported.
    from time import perf_counter

    import numpy as np

    from .manifold import nearest_neighbors
    from .reports import plot_histogram, write_report

    rng = np.random.default_rng(args.seed)
    corpus = rng.standard_normal((args.n, args.d))
    queries = rng.standard_normal((args.queries, args.d))

    mismatches = 0
    for q in queries[: min(10, len(queries))]:
        idx, _ = nearest_neighbors(corpus, q, args.k)
        d2 = ((corpus - q) ** 2).sum(axis=1)
        oracle = np.lexsort((np.arange(args.n), d2))[: args.k]
        if not np.array_equal(idx, oracle):
            mismatches += 1

    nearest_neighbors(corpus, queries[0], args.k)  # warm cache before timing
    times_ms = []
    for q in queries:
        t0 = perf_counter()
        nearest_neighbors(corpus, q, args.k)
        times_ms.append((perf_counter() - t0) * 1e3)
    times = np.asarray(times_ms)

    pairs = [
        ("n", args.n),
        ("d", args.d),
        ("k", args.k),
        ("queries", args.queries),
        ("threads", 1),
        ("oracle_mismatches", mismatches),
        ("mean_ms", float(times.mean())),
        ("p50_ms", float(np.percentile(times, 50))),
        ("p95_ms", float(np.percentile(times, 95))),
        ("max_ms", float(times.max())),
    ]
    report = write_report(args.report, pairs)
    figure = plot_histogram(
        args.figure or Path(args.report).with_suffix(".png"),
        times_ms,
        xlabel="per-query latency (ms)",
        title=f"exact {args.k}-NN over {args.n} x {args.d}",
    )
    print(f"mean {times.mean():.3f} ms/query over {args.queries} queries")
    print(f"report: {report}")
    print(f"figure: {figure}")
    return 0


def cmd_k_sweep(args) -> int:
    import numpy as np

    from .components import ComponentKind
    from .manifold import build_store, leave_one_out_projections
    from .pca import load_face_embedder
    from .reports import plot_series, write_report

    ids, decomps, tags, _ = _load_decomposed_corpus(args.corpus)
    embedder = load_face_embedder(args.models)
    ks = _parse_int_list(args.ks, "--ks")
    store = build_store(
        embedder, decomps, sample_ids=ids,
        tags=tags if any(tags) else None, default_k=max(1, min(10, len(ids) - 1)),
    )
    pairs: list[tuple[str, object]] = [("samples", len(ids)), ("ks", args.ks)]
    series: dict[str, list[float]] = {kind.slug: [] for kind in ComponentKind}
    for kind in ComponentKind:
        crops = store.crop_bank[kind]
        for k in ks:
            projections, residuals = leave_one_out_projections(store, kind, k)
            latent_residual = float(residuals.mean())
            model = embedder[kind]
            pixel_mse = float(
                np.mean(
                    [
                        np.mean((model.decode_values(projections[i]) - crops[i]) ** 2)
                        for i in range(len(ids))
                    ]
                )
            )
            pairs.append((f"{kind.slug}.latent_residual.{k}", latent_residual))
            pairs.append((f"{kind.slug}.pixel_mse.{k}", pixel_mse))
            series[kind.slug].append(latent_residual)
    report = write_report(args.report, pairs)
    figure = plot_series(
        args.figure or Path(args.report).with_suffix(".png"),
        ks,
        series,
        xlabel="K",
        ylabel="mean held-out latent residual",
        title="neighborhood size sweep",
    )
    print(f"report: {report}")
    print(f"figure: {figure}")
    return 0


def cmd_dim_sweep(args) -> int:
    from .components import ComponentKind
    from .pca import fit_face_pca, reconstruction_mse
    from .reports import plot_series, write_report

    _, decomps, _, _ = _load_decomposed_corpus(args.corpus)
    dims = _parse_int_list(args.dims, "--dims")
    pairs: list[tuple[str, object]] = [("samples", len(decomps)), ("dims", args.dims)]
    series: dict[str, list[float]] = {kind.slug: [] for kind in ComponentKind}
    for d in dims:
        embedder = fit_face_pca(decomps, d)
        for kind in ComponentKind:
            crops = [dec.crop(kind) for dec in decomps]
            mse = reconstruction_mse(embedder[kind], crops)
            pairs.append((f"{kind.slug}.mse.{d}", mse))
            series[kind.slug].append(mse)
    report = write_report(args.report, pairs)
    figure = plot_series(
        args.figure or Path(args.report).with_suffix(".png"),
        dims,
        series,
        xlabel="latent dimension",
        ylabel="reconstruction MSE (pre-clamp)",
        title="latent dimension sweep",
    )
    print(f"report: {report}")
    print(f"figure: {figure}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .components import decompose
    from .service import create_app
    from .synthetic import load_corpus

    store, _ = _load_store_with_models(args.store, args.models)
    ids, rasters, _, layout = load_corpus(args.corpus)
    if list(ids) != list(store.features(next(iter(store.feature_sets))).sample_ids):
        raise SketchManifoldError("corpus sample ids do not match the store")
    store.attach_crops([decompose(r, layout) for r in rasters])
    if args.canvas is not None:
        width, height = _parse_canvas(args.canvas)
        if (width, height) != (layout.width, layout.height):
            raise SketchManifoldError(
                f"--canvas {args.canvas} does not match corpus layout "
                f"{layout.width}x{layout.height}"
            )
    if args.k is not None:
        smallest = min(fs.size for fs in store.feature_sets.values())
        if not (1 <= args.k <= smallest):
            raise SketchManifoldError(f"--k {args.k} out of range [1, {smallest}]")
        store.default_k = args.k
    app = create_app(store, layout, channels=args.channels)
    print(f"serving on {args.host}:{args.port} (K={store.default_k})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchmanifold",
        description="component-manifold face sketch refinement toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus-gen", help="generate a deterministic synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--canvas", default="64x64")
    p.add_argument("--stroke-width", type=float, default=1.5)
    p.set_defaults(handler=cmd_corpus_gen)

    p = sub.add_parser("fit", help="fit the per-component embedder on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("build", help="encode a corpus into a manifold store file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser("project", help="refine one sketch through the manifold")
    p.add_argument("--store", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--corpus", required=True, help="corpus dir (provides the layout)")
    p.add_argument("--sketch", required=True)
    p.add_argument("--wb", type=float, default=0.0)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("shadow", help="compute the shadow overlay for a sketch")
    p.add_argument("--store", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--sketch", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--tag", default=None)
    p.add_argument("--uniform", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_shadow)

    p = sub.add_parser("morph", help="morph between two corpus samples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_morph)

    p = sub.add_parser("recombine", help="paste components from different samples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--left-eye", required=True)
    p.add_argument("--right-eye", required=True)
    p.add_argument("--nose", required=True)
    p.add_argument("--mouth", required=True)
    p.add_argument("--remainder", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_recombine)

    p = sub.add_parser("knn-bench", help="measure exact KNN latency, single-threaded")
    p.add_argument("--n", type=int, default=16860)
    p.add_argument("--d", type=int, default=512)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.add_argument("--figure", default=None)
    p.set_defaults(handler=cmd_knn_bench)

    p = sub.add_parser("k-sweep", help="held-out projection error across K values")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--ks", default="3,6,10,15,20")
    p.add_argument("--report", required=True)
    p.add_argument("--figure", default=None)
    p.set_defaults(handler=cmd_k_sweep)

    p = sub.add_parser("dim-sweep", help="reconstruction MSE across latent dimensions")
    p.add_argument("--corpus", required=True)
    p.add_argument("--dims", default="4,8,16")
    p.add_argument("--report", required=True)
    p.add_argument("--figure", default=None)
    p.set_defaults(handler=cmd_dim_sweep)

    p = sub.add_parser("serve", help="run the interactive sketching service")
    p.add_argument("--store", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--canvas", default=None)
    p.add_argument("--channels", type=int, default=8)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "knn-bench":
        # Must happen before numpy's first import anywhere in the process.
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (SketchManifoldError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
