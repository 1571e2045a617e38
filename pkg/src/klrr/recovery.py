"""Alternating solver for kernel low-rank recovery.

Minimises

    F(A, B) = ||B||_* + lam * sum_i ||phi(a_i) - phi(x_i)||
              + rho/2 * ||B^T B - phi(A)^T phi(A)||_F^2

by alternating one block-coordinate sweep over the columns of ``A`` with the
closed-form factor update.  The column solver works on the ``mu``-smoothed
objective (``||.||`` replaced by ``sqrt(||.||^2 + mu^2)``); that smoothed
value is what decreases monotonically and what drives the stopping rule.
The unsmoothed value is tracked alongside it.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .column_solver import column_objective_grad, row_weights_for, solve_column
from .config import SolverConfig
from .errors import InvalidArgumentError, KLRRError, NumericalError
from .kernel import as_data_matrix, check_gram, gram
from .spectral import FactorSpectrum, nuclear_norm_from_gram, update_factor

log = logging.getLogger(__name__)

STEP_TOL = 1e-4


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    objective_raw: float
    delta_A: float
    delta_M: float


@dataclass
class RecoveryResult:
    A_recovered: np.ndarray
    records: list
    iterations: int
    converged: bool
    per_column_residuals: np.ndarray
    M: np.ndarray
    spectrum: FactorSpectrum | None = None
    column_stats: dict = field(default_factory=dict)

    @property
    def objective_trace(self):
        return [r.objective for r in self.records]

    @property
    def raw_objective_trace(self):
        return [r.objective_raw for r in self.records]


def kernel_residuals(spec, A, X, smooth_mu=0.0):
    """Per-column ``sqrt(k(a,a) + k(x,x) - 2 k(a,x) + mu^2)`` with the radicand clamped at 0."""
    if spec.is_gaussian:
        sq = np.sum((A - X) ** 2, axis=0)
        s = 2.0 - 2.0 * np.exp(-spec.gamma * sq)
    else:
        c, d = spec.offset, spec.degree
        s = (np.power(np.sum(A * A, 0) + c, d) + np.power(np.sum(X * X, 0) + c, d)
             - 2.0 * np.power(np.sum(A * X, 0) + c, d))
    return np.sqrt(np.maximum(s, 0.0) + smooth_mu * smooth_mu)


def objective(A, spectrum_or_M, X, cfg, smooth_mu=0.0, include_nuclear=True):
    """Objective value at ``(A, B)``; ``B`` is given by its spectrum or by ``M = B^T B``.

    A bare ``M`` is treated as ``B^T B`` of an exact factor, whose nuclear
    norm is ``sum sqrt(eig(M))``.
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if A.shape != X.shape:
        raise InvalidArgumentError(f"A {A.shape} and X {X.shape} differ in shape")
    if isinstance(spectrum_or_M, FactorSpectrum):
        M = spectrum_or_M.reconstruct_M()
        nuc = spectrum_or_M.nuclear_norm
    else:
        M = np.asarray(spectrum_or_M, dtype=np.float64)
        nuc = nuclear_norm_from_gram(M) if include_nuclear else 0.0
    n = A.shape[1]
    if M.shape != (n, n):
        raise InvalidArgumentError(f"M has shape {M.shape}, expected {(n, n)}")
    fid = float(np.sum(kernel_residuals(cfg.kernel, A, X, smooth_mu)))
    R = M - gram(cfg.kernel, A)
    return (nuc if include_nuclear else 0.0) + cfg.lam * fid + 0.5 * cfg.rho * float(np.sum(R * R))


def _sweep(AT, X, M, cfg, stats):
    """One BCD pass over all columns.  ``AT`` (``n x d``) is updated in place."""
    n = AT.shape[0]
    if cfg.bcd_mode == "sequential":
        for i in range(n):
            res = solve_column(AT.T, X, M, i, cfg)
            AT[i] = res.a
            _tally(stats, res)
        return
    snapshot = AT.copy()

    def work(i):
        return solve_column(snapshot.T, X, M, i, cfg)

    if cfg.n_workers > 1:
        with ThreadPoolExecutor(cfg.n_workers) as pool:
            results = list(pool.map(work, range(n)))
    else:
        results = [work(i) for i in range(n)]
    for i, res in enumerate(results):
        AT[i] = res.a
        _tally(stats, res)


def _tally(stats, res):
    stats["sweeps"] = stats.get("sweeps", 0) + res.sweeps
    stats["rejected"] = stats.get("rejected", 0) + res.rejected
    stats["inner"] = stats.get("inner", 0) + res.inner_iterations


def _initial_iterate(X, cfg):
    # rows of AT are columns of A, so AT.T is a Fortran-ordered d x n view
    if cfg.init_mode == "copy_x":
        return np.ascontiguousarray(X.T).copy()
    return np.zeros((X.shape[1], X.shape[0]))


def _converged(F_prev, F, dA, dM, cfg):
    return abs(F_prev - F) <= cfg.tol_outer * (1.0 + abs(F_prev)) and dA < STEP_TOL and dM < STEP_TOL


def recover(X, cfg=None, K_init=None, callback=None):
    """Recover the authentic matrix from column-corrupted observations ``X`` (``d x n``).

    ``K_init`` optionally replaces ``phi(X)^T phi(X)`` as the initial ``B^T B``.
    ``callback(record)`` is invoked after every outer iteration.
    """
    cfg = cfg or SolverConfig()
    X = as_data_matrix(X)
    AT = _initial_iterate(X, cfg)
    K0 = gram(cfg.kernel, X) if K_init is None else check_gram(K_init)
    spectrum = FactorSpectrum.exact(K0, strict=cfg.kernel.is_psd)
    M = spectrum.reconstruct_M()
    mu = cfg.smooth_mu
    F = objective(AT.T, spectrum, X, cfg, mu)
    records = [TraceRecord(0, F, objective(AT.T, spectrum, X, cfg), 0.0, 0.0)]
    stats = {}
    converged = False
    k = 0
    try:
        for k in range(1, cfg.max_outer + 1):
            A_old = AT.copy()
            _sweep(AT, X, M, cfg, stats)
            spectrum = update_factor(gram(cfg.kernel, AT.T), cfg.rho, strict=cfg.kernel.is_psd)
            M_new = spectrum.reconstruct_M()
            F_prev, F = F, objective(AT.T, spectrum, X, cfg, mu)
            if not math.isfinite(F):
                raise NumericalError("objective became non-finite", iteration=k)
            rec = TraceRecord(k, F, objective(AT.T, spectrum, X, cfg),
                              float(np.linalg.norm(AT - A_old)), float(np.linalg.norm(M_new - M)))
            records.append(rec)
            M = M_new
            log.debug("outer %d: F=%.12g dA=%.3g dM=%.3g", k, F, rec.delta_A, rec.delta_M)
            if callback is not None:
                callback(rec)
            if _converged(F_prev, F, rec.delta_A, rec.delta_M, cfg):
                converged = True
                break
    except KLRRError as exc:
        if isinstance(exc, NumericalError):
            exc.diagnostics.setdefault("trace", records)
            exc.diagnostics.setdefault("A", AT.T.copy())
        raise
    A = np.array(AT.T)
    return RecoveryResult(A, records, k if cfg.max_outer else 0, converged,
                          kernel_residuals(cfg.kernel, A, X), M, spectrum, stats)


def recover_with_graph(X, K_fixed, cfg=None, callback=None):
    """Recover ``A`` with ``B^T B`` pinned to ``K_fixed``; only column sweeps run.

    The recorded objective omits the (constant) nuclear-norm term.
    """
    cfg = cfg or SolverConfig()
    X = as_data_matrix(X)
    M = check_gram(K_fixed)
    if M.shape != (X.shape[1],) * 2:
        raise InvalidArgumentError(f"K_fixed has shape {M.shape}, expected {(X.shape[1],) * 2}")
    AT = _initial_iterate(X, cfg)
    mu = cfg.smooth_mu

    def a_terms(A, smooth):
        return objective(A, M, X, cfg, smooth, include_nuclear=False)

    F = a_terms(AT.T, mu)
    records = [TraceRecord(0, F, a_terms(AT.T, 0.0), 0.0, 0.0)]
    stats = {}
    converged = False
    k = 0
    try:
        for k in range(1, cfg.max_outer + 1):
            A_old = AT.copy()
            _sweep(AT, X, M, cfg, stats)
            F_prev, F = F, a_terms(AT.T, mu)
            rec = TraceRecord(k, F, a_terms(AT.T, 0.0), float(np.linalg.norm(AT - A_old)), 0.0)
            records.append(rec)
            if callback is not None:
                callback(rec)
            if _converged(F_prev, F, rec.delta_A, 0.0, cfg):
                converged = True
                break
    except NumericalError as exc:
        exc.diagnostics.setdefault("trace", records)
        exc.diagnostics.setdefault("A", AT.T.copy())
        raise
    A = np.array(AT.T)
    return RecoveryResult(A, records, k, converged, kernel_residuals(cfg.kernel, A, X), M, None, stats)


def stationarity(A, X, M, cfg):
    """Per-column ``||grad_a Phi_i(a_i)|| / (1 + ||a_i||)`` of the smoothed column objective."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[1]
    out = np.empty(n)
    for i in range(n):
        g = column_objective_grad(cfg.kernel, A[:, i], X[:, i], A, M[i], i, cfg.alpha,
                                  cfg.smooth_mu, row_weights_for(n, i, cfg.column_model))
        out[i] = np.linalg.norm(g) / (1.0 + np.linalg.norm(A[:, i]))
    return out
