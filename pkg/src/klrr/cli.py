"""Command-line front end.

Each run writes one directory holding ``config.json``, the matrices as CSV,
``trace.csv`` and ``report.json``.  The directory is ``--out`` if given,
otherwise ``$KLRR_OUTPUT_ROOT/<command>-seed<seed>`` (root defaults to
``./klrr_runs``).  Outputs depend only on the flags, so reruns are
byte-identical.

Exit codes: 0 success, 1 numerical failure, 2 usage/config error,
3 I/O or file-format error.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data, metrics
from .config import SolverConfig
from .errors import (DomainError, FormatError, InvalidArgumentError, KLRRError,
                     NotPSDError, NumericalError)
from .kernel import KernelSpec
from .recovery import kernel_residuals, recover, recover_with_graph

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
OUTPUT_ROOT_ENV = "KLRR_OUTPUT_ROOT"
DEFAULT_ROOT = "klrr_runs"

log = logging.getLogger("klrr")


class UsageError(Exception):
    pass


# -- argument parsing -----------------------------------------------------------

def _solver_flags(p, gamma_default):
    g = p.add_argument_group("solver")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="fidelity weight (default 1)")
    g.add_argument("--rho", type=float, default=10.0, help="penalty on ||B^T B - K_A|| (default 10)")
    g.add_argument("--gamma", type=float, default=None,
                   help=f"Gaussian kernel width (default {gamma_default})")
    g.add_argument("--poly-degree", type=float, default=None, help="use the polynomial kernel of this degree")
    g.add_argument("--poly-offset", type=float, default=1.0, help="polynomial kernel offset c (default 1)")
    g.add_argument("--smooth-mu", type=float, default=1e-4)
    g.add_argument("--max-outer", type=int, default=100)
    g.add_argument("--tol-outer", type=float, default=1e-6)
    g.add_argument("--max-inner", type=int, default=200)
    g.add_argument("--tol-inner", type=float, default=1e-8)
    g.add_argument("--max-irls", type=int, default=20)
    g.add_argument("--tol-irls", type=float, default=1e-8)
    g.add_argument("--init", choices=("copy_x", "zero"), default="copy_x")
    g.add_argument("--column-model", choices=("exact", "literal"), default="exact")
    g.add_argument("--parallel", type=int, default=0, metavar="N",
                   help="Jacobi column sweeps on N threads (0 = sequential)")
    g.add_argument("--backend", choices=("compiled", "python"), default=None)
    p.set_defaults(gamma_default=gamma_default)


def _output_flags(p):
    p.add_argument("--out", type=Path, default=None, help="run directory (overrides the output root)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="klrr", description="Kernel low-rank recovery experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-circle", help="recover points on a circle from outlier-corrupted samples")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--outliers", type=float, default=0.1, help="fraction of displaced points")
    p.add_argument("--outlier-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, required=True)
    _solver_flags(p, 1.0)
    _output_flags(p)

    p = sub.add_parser("denoise", help="rotate, corrupt and recover an image corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--idx", type=Path, help="IDX image file")
    src.add_argument("--pgm-dir", type=Path, help="directory of PGM images")
    src.add_argument("--digits", action="store_true", help="8x8 digit corpus bundled with scikit-learn")
    p.add_argument("--idx-labels", type=Path, default=None)
    p.add_argument("--classes", type=str, default=None, help="comma-separated labels to keep, e.g. 2,3")
    p.add_argument("--n", type=int, default=100, help="images drawn at random (default 100)")
    p.add_argument("--rotate", type=float, nargs=2, default=None, metavar=("MIN", "MAX"),
                   help="rotate every image by a random angle in [MIN, MAX] degrees")
    p.add_argument("--corruption", choices=("gaussian", "occlusion"), default="gaussian")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--noise-scale", type=float, default=0.5)
    p.add_argument("--blocks", type=int, default=3)
    p.add_argument("--block-size", type=int, default=4)
    p.add_argument("--pixel-scale", action=argparse.BooleanOptionalAction, default=True,
                   help="multiply by 255 before computing PSNR (default on)")
    p.add_argument("--seed", type=int, required=True)
    _solver_flags(p, 0.003)
    _output_flags(p)

    p = sub.add_parser("graph-recover", help="recover with B^T B pinned to a k-NN graph or given Gram")
    p.add_argument("--input", type=Path, required=True, help="observed d x n matrix (.csv or .bin)")
    p.add_argument("--reference", type=Path, default=None, help="clean matrix for metrics")
    p.add_argument("--gram", type=Path, default=None, help="n x n Gram matrix; default is a k-NN graph")
    p.add_argument("--graph-from", choices=("input", "reference"), default="input",
                   help="matrix the k-NN graph is built from")
    p.add_argument("--knn", type=int, default=5)
    p.add_argument("--heat-sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0, help="only names the run directory")
    _solver_flags(p, 1.0)
    _output_flags(p)

    p = sub.add_parser("eval", help="metrics between two stored matrices")
    p.add_argument("reference", type=Path)
    p.add_argument("estimate", type=Path)
    p.add_argument("--mask", type=Path, default=None, help="1 x n matrix, nonzero marks corrupted columns")
    p.add_argument("--peak", type=float, default=255.0)
    p.add_argument("--pixel-scale", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--seed", type=int, default=0, help="only names the run directory")
    _output_flags(p)
    return parser


def _kernel_from(args):
    if args.poly_degree is not None:
        if args.gamma is not None:
            raise UsageError("--gamma and --poly-degree are mutually exclusive")
        return KernelSpec.polynomial(args.poly_degree, args.poly_offset)
    return KernelSpec.gaussian(args.gamma if args.gamma is not None else args.gamma_default)


def _config_from(args):
    if args.parallel < 0:
        raise UsageError("--parallel must be >= 0")
    return SolverConfig(
        lam=args.lam, rho=args.rho, kernel=_kernel_from(args), smooth_mu=args.smooth_mu,
        tol_outer=args.tol_outer, max_outer=args.max_outer, tol_inner=args.tol_inner,
        max_inner=args.max_inner, tol_irls=args.tol_irls, max_irls=args.max_irls,
        init_mode=args.init, column_model=args.column_model,
        bcd_mode="jacobi" if args.parallel else "sequential",
        n_workers=max(1, args.parallel), backend=args.backend)


# -- persistence -----------------------------------------------------------------

def _run_dir(args):
    if args.out is not None:
        out = args.out
    else:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_ROOT))
        out = root / f"{args.command}-seed{args.seed}"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise FormatError(f"cannot create run directory: {exc}", path=out) from exc
    return out


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _args_snapshot(args):
    skip = {"out", "verbose", "gamma_default", "func"}
    snap = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        snap[k] = str(v) if isinstance(v, Path) else v
    return snap


def write_trace(path, records):
    lines = ["iteration,objective,objective_raw,delta_A,delta_M"]
    for r in records:
        lines.append(f"{r.iteration},{r.objective!r},{r.objective_raw!r},{r.delta_A!r},{r.delta_M!r}")
    path.write_text("\n".join(lines) + "\n")


def _solve(run, out, fn, *fn_args):
    """Run a solver; on numerical failure persist the partial trace and re-raise."""
    try:
        return fn(*fn_args)
    except NumericalError as exc:
        trace = exc.diagnostics.get("trace")
        if trace:
            write_trace(out / "trace.csv", trace)
        _write_json(out / "report.json", {"status": "failed", "error": str(exc), "command": run})
        raise


def _solver_summary(res, cfg):
    return {
        "iterations": res.iterations,
        "converged": res.converged,
        "objective": res.records[-1].objective,
        "objective_raw": res.records[-1].objective_raw,
        "config": cfg.to_dict(),
    }


# -- commands ------------------------------------------------------------------------

def cmd_synth_circle(args):
    cfg = _config_from(args)
    if not cfg.kernel.is_gaussian:
        raise UsageError("synth-circle uses the Gaussian kernel; drop --poly-degree")
    X, truth, mask = data.synth_circle(args.n, args.outliers, args.outlier_scale, args.seed)
    out = _run_dir(args)
    _write_json(out / "config.json", {"args": _args_snapshot(args), "solver": cfg.to_dict()})
    data.save_matrix_csv(out / "ground_truth.csv", truth)
    data.save_matrix_csv(out / "corrupted.csv", X)
    res = _solve("synth-circle", out, recover, X, cfg)
    A = res.A_recovered
    data.save_matrix_csv(out / "recovered.csv", A)
    write_trace(out / "trace.csv", res.records)
    rep = metrics.MetricsReport.compute(truth, A, mask=mask).to_dict()
    rep["input"] = metrics.MetricsReport.compute(truth, X, mask=mask).to_dict()
    rep["outlier_columns"] = [int(j) for j in np.flatnonzero(mask)]
    rep["distance_to_circle"] = {
        "input": [float(v) for v in np.abs(np.linalg.norm(X, axis=0) - 1.0)],
        "recovered": [float(v) for v in np.abs(np.linalg.norm(A, axis=0) - 1.0)],
    }
    rep["kernel_residuals"] = [float(v) for v in res.per_column_residuals]
    rep["solver"] = _solver_summary(res, cfg)
    _write_json(out / "report.json", rep)
    return EXIT_OK


def _load_corpus(args):
    if args.digits:
        images = data.load_digits_subset(n=10**9, digits=tuple(range(10)), seed=0)
    elif args.idx is not None:
        images = data.load_idx(args.idx, args.idx_labels)
    else:
        images = data.load_pgm_dir(args.pgm_dir)
    if args.classes:
        if images.labels is None:
            raise UsageError("--classes needs labels (--idx-labels or --digits)")
        try:
            keep = [int(c) for c in args.classes.split(",")]
        except ValueError:
            raise UsageError(f"bad --classes value {args.classes!r}") from None
        images = images.subset(np.flatnonzero(np.isin(images.labels, keep)))
    if len(images) == 0:
        raise UsageError("no images left after filtering")
    rng = np.random.default_rng(args.seed)
    if args.n < len(images):
        images = images.subset(np.sort(rng.choice(len(images), size=args.n, replace=False)))
    return images


def cmd_denoise(args):
    cfg = _config_from(args)
    images = _load_corpus(args)
    if args.rotate is not None:
        images = data.rotate_images(images, tuple(args.rotate), seed=args.seed)
    spec = data.CorruptionSpec(fraction=args.fraction, kind=args.corruption, scale=args.noise_scale,
                               blocks=args.blocks, block_size=(args.block_size, args.block_size),
                               seed=args.seed)
    corrupted, mask = data.corrupt(images, spec)
    clean = data.normalize_columns(images.to_matrix())
    X = data.normalize_columns(corrupted.to_matrix())
    out = _run_dir(args)
    _write_json(out / "config.json", {"args": _args_snapshot(args), "solver": cfg.to_dict(),
                                      "corruption": {k: (list(v) if isinstance(v, tuple) else v)
                                                     for k, v in vars(spec).items()}})
    data.save_matrix_csv(out / "ground_truth.csv", clean)
    data.save_matrix_csv(out / "corrupted.csv", X)
    res = _solve("denoise", out, recover, X, cfg)
    A = res.A_recovered
    data.save_matrix_csv(out / "recovered.csv", A)
    write_trace(out / "trace.csv", res.records)
    peak = np.max(np.abs(A), axis=0)
    peak[peak == 0] = 1.0
    data.write_idx(out / "recovered.idx", data.ImageSet.from_matrix(np.clip(A / peak, 0, 1), images.shape).images)
    s = 255.0 if args.pixel_scale else 1.0
    rep = metrics.MetricsReport.compute(s * clean, s * A, mask=mask).to_dict()
    rep["input"] = metrics.MetricsReport.compute(s * clean, s * X, mask=mask).to_dict()
    rep["corrupted_columns"] = [int(j) for j in np.flatnonzero(mask)]
    rep["solver"] = _solver_summary(res, cfg)
    _write_json(out / "report.json", rep)
    return EXIT_OK


def cmd_graph_recover(args):
    cfg = _config_from(args)
    X = data.load_matrix(args.input)
    ref = data.load_matrix(args.reference) if args.reference is not None else None
    if ref is not None and ref.shape != X.shape:
        raise UsageError(f"reference shape {ref.shape} differs from input {X.shape}")
    if args.gram is not None:
        K = data.load_matrix(args.gram)
    else:
        if args.graph_from == "reference" and ref is None:
            raise UsageError("--graph-from reference needs --reference")
        K = data.knn_graph(ref if args.graph_from == "reference" else X, args.knn, args.heat_sigma)
    out = _run_dir(args)
    _write_json(out / "config.json", {"args": _args_snapshot(args), "solver": cfg.to_dict()})
    data.save_matrix_csv(out / "corrupted.csv", X)
    data.save_matrix_csv(out / "gram.csv", K)
    res = _solve("graph-recover", out, recover_with_graph, X, K, cfg)
    A = res.A_recovered
    data.save_matrix_csv(out / "recovered.csv", A)
    write_trace(out / "trace.csv", res.records)
    if ref is not None:
        data.save_matrix_csv(out / "ground_truth.csv", ref)
        rep = metrics.MetricsReport.compute(ref, A).to_dict()
        rep["input"] = metrics.MetricsReport.compute(ref, X).to_dict()
    else:
        rep = metrics.MetricsReport.compute(X, A).to_dict()
    rep["kernel_residuals"] = [float(v) for v in kernel_residuals(cfg.kernel, A, X)]
    rep["solver"] = _solver_summary(res, cfg)
    _write_json(out / "report.json", rep)
    return EXIT_OK


def cmd_eval(args):
    X0 = data.load_matrix(args.reference)
    Xr = data.load_matrix(args.estimate)
    if X0.shape != Xr.shape:
        raise UsageError(f"shape mismatch: {X0.shape} vs {Xr.shape}")
    mask = None
    if args.mask is not None:
        mask = data.load_matrix(args.mask).ravel() != 0
    s = 255.0 if args.pixel_scale else 1.0
    rep = metrics.MetricsReport.compute(s * X0, s * Xr, peak=args.peak, mask=mask)
    text = rep.to_json()
    out = _run_dir(args)
    (out / "report.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "synth-circle": cmd_synth_circle,
    "denoise": cmd_denoise,
    "graph-recover": cmd_graph_recover,
    "eval": cmd_eval,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"klrr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"klrr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, DomainError, NotPSDError) as exc:
        print(f"klrr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KLRRError as exc:
        print(f"klrr: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
