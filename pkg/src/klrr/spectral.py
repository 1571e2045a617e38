"""Closed-form update of the implicit low-rank factor.

The factor ``B`` is never formed.  Its spectrum ``(Gamma, V)`` is enough:
``B^T B = V diag(Gamma^2) V^T`` and ``||B||_* = sum(Gamma)``.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NotPSDError, NumericalError

PSD_TOL = 1e-8


@dataclass(frozen=True)
class FactorSpectrum:
    """Eigenvalues ``sigma`` of the target Gram matrix, its eigenvectors, and the factor's diagonal."""

    eigvals: np.ndarray
    eigvecs: np.ndarray
    gamma_diag: np.ndarray

    @property
    def nuclear_norm(self):
        return float(np.sum(self.gamma_diag))

    def reconstruct_M(self):
        """``B^T B`` as a dense symmetric matrix."""
        V = self.eigvecs
        M = (V * self.gamma_diag**2) @ V.T
        return 0.5 * (M + M.T)

    def subproblem_objective(self, rho):
        """``||B||_* + rho/2 ||B^T B - K||_F^2`` evaluated per eigenvalue."""
        g = self.gamma_diag
        return float(np.sum(g + 0.5 * rho * (self.eigvals - g**2) ** 2))

    @classmethod
    def exact(cls, K, strict=True):
        """Spectrum of a factor with ``B^T B = K`` exactly (``Gamma = sqrt(sigma)``).

        With ``strict=False`` an indefinite ``K`` is replaced by its PSD projection.
        """
        w, V = psd_eigendecompose(K, strict=strict)
        return cls(w, V, np.sqrt(np.maximum(w, 0.0)))


def psd_eigendecompose(K, strict=True):
    """Eigendecomposition of a symmetric PSD matrix, eigenvalues descending.

    Eigenvalues in ``[-1e-8 * lambda_max, 0)`` are clamped to zero.  More
    negative eigenvalues raise :class:`NotPSDError` unless ``strict`` is
    False, in which case they are returned as-is.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise NumericalError("non-finite entries in Gram matrix")
    scale = np.max(np.abs(K), initial=0.0)
    if np.max(np.abs(K - K.T), initial=0.0) > 1e-10 * max(scale, 1.0):
        raise InvalidArgumentError("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh(0.5 * (K + K.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    lam_max = max(w[0], 0.0) if w.size else 0.0
    floor = -PSD_TOL * lam_max
    if strict and w.size and w[-1] < floor:
        raise NotPSDError(f"minimum eigenvalue {w[-1]:.6g} below -1e-8 * {lam_max:.6g}")
    w[(w < 0) & (w >= floor)] = 0.0
    return w, V


def _h(gamma, sigma, rho):
    return 0.5 * rho * (sigma - gamma * gamma) ** 2 + gamma


def solve_gamma_cubic(sigma, rho):
    """Global minimiser over ``gamma >= 0`` of ``rho/2 (sigma - gamma^2)^2 + gamma``.

    Stationary points solve ``gamma^3 - sigma*gamma + 1/(2 rho) = 0``.  Its
    positive roots (trigonometric form, polished by Newton) and the boundary
    ``gamma = 0`` are evaluated and the smallest objective wins; ties go to
    the smaller ``gamma``.
    """
    sigma = float(sigma)
    rho = float(rho)
    if rho <= 0:
        raise InvalidArgumentError(f"rho must be > 0, got {rho}")
    candidates = [0.0]
    q = 0.5 / rho
    # three real roots iff 4 sigma^3 >= 27 q^2; otherwise the lone real root is negative
    if sigma > 0 and 4.0 * sigma**3 >= 27.0 * q * q:
        r = 2.0 * math.sqrt(sigma / 3.0)
        arg = -1.5 * q / sigma * math.sqrt(3.0 / sigma)
        theta = math.acos(min(1.0, max(-1.0, arg))) / 3.0
        for k in (0, 1):
            g = r * math.cos(theta - 2.0 * math.pi * k / 3.0)
            for _ in range(3):
                dp = 3.0 * g * g - sigma
                if dp == 0.0:
                    break
                step = (g * g * g - sigma * g + q) / dp
                g_new = g - step
                if not math.isfinite(g_new) or abs(step) > 0.5 * r:
                    break
                g = g_new
            if g > 0:
                candidates.append(g)
    best = candidates[0]
    best_h = _h(best, sigma, rho)
    for g in candidates[1:]:
        hg = _h(g, sigma, rho)
        if hg < best_h or (hg == best_h and g < best):
            best, best_h = g, hg
    return best


def update_factor(K_A, rho, strict=True):
    """Minimise ``||B||_* + rho/2 ||B^T B - K_A||_F^2`` over ``B``.

    With ``strict=False`` an indefinite ``K_A`` is accepted; negative
    eigenvalues get ``Gamma = 0``, which is their exact minimiser.
    """
    if rho <= 0:
        raise InvalidArgumentError(f"rho must be > 0, got {rho}")
    w, V = psd_eigendecompose(K_A, strict=strict)
    g = np.array([solve_gamma_cubic(s, rho) if s > 0 else 0.0 for s in w])
    return FactorSpectrum(w, V, g)


def nuclear_norm_from_gram(K):
    """``sum_i sqrt(lambda_i(K))`` -- the nuclear norm of any ``B`` with ``B^T B = K``.

    Eigenvalues under the numerical-rank cutoff ``n * eps * lambda_max`` are
    roundoff; their square roots would otherwise add ``O(sqrt(eps))`` each.
    """
    w, _ = psd_eigendecompose(K)
    if w.size:
        w = np.where(w > w.size * np.finfo(np.float64).eps * w[0], w, 0.0)
    return float(np.sum(np.sqrt(w)))
