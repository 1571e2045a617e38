"""Time the compiled column core against the numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 5] [--n 100] [--d 64]

Reports the best of ``--repeat`` runs for a single value/gradient call, one
APG column solve, one full IRLS column update and a short ``recover`` run.
"""
import argparse
import timeit

import numpy as np

from klrr import _backend
from klrr.column_solver import ColumnProblem, apg_minimize_column, smooth_part_value_grad, solve_column
from klrr.config import SolverConfig
from klrr.kernel import KernelSpec, gram
from klrr.recovery import recover
from klrr.spectral import update_factor


def cases(d, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(d, n)) / np.sqrt(d)
    A = X + 0.05 * rng.normal(size=(d, n)) / np.sqrt(d)
    out = {}
    for label, spec in (("gaussian", KernelSpec.gaussian(1.0)), ("poly3", KernelSpec.polynomial(3, 1.0))):
        cfg = SolverConfig(lam=0.1, rho=3.0, kernel=spec, max_outer=3)
        M = update_factor(gram(spec, A), cfg.rho).reconstruct_M()
        prob = ColumnProblem(0, A[:, 0], X[:, 0], A, M[0], 0.5 * cfg.alpha, spec, cfg.smooth_mu)
        out[label] = (cfg, X, A, M, prob)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    names = sorted(_backend.BACKENDS)
    if "compiled" not in names:
        print("compiled core not built; only the python fallback is timed")
    print(f"d={args.d} n={args.n} best of {args.repeat}")
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in names) + ("     speedup" if len(names) == 2 else ""))

    for label, (cfg, X, A, M, prob) in cases(args.d, args.n, args.seed).items():
        jobs = {
            "value_grad": (lambda b: smooth_part_value_grad(prob, prob.a_current, b), 200),
            "apg": (lambda b: apg_minimize_column(prob, backend=b), 3),
            "solve_column": (lambda b: solve_column(A, X, M, 0, cfg, backend=b), 3),
            "recover (3 outer)": (lambda b: recover(X, cfg.replace(backend=b)), 1),
        }
        for job, (fn, number) in jobs.items():
            t = {}
            for b in names:
                t[b] = min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number
            row = f"{label + ' ' + job:28s}" + "".join(f"{t[b] * 1e3:10.3f}ms" for b in names)
            if len(names) == 2:
                row += f"{t['python'] / t['compiled']:11.1f}x"
            print(row, flush=True)


if __name__ == "__main__":
    main()
