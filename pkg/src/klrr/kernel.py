"""Kernel functions and Gram-matrix construction.

Two kernels are supported: the Gaussian kernel ``exp(-gamma * ||x - y||^2)``
and the polynomial kernel ``(x^T y + c)^d``.  Data matrices are ``d x n``
with one sample per column.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DomainError, InvalidArgumentError


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus its hyperparameters.

    Use :meth:`gaussian` or :meth:`polynomial` rather than the raw constructor.
    """

    kind: str
    gamma: float = 0.0
    degree: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind == "gaussian":
            if not (np.isfinite(self.gamma) and self.gamma > 0):
                raise InvalidArgumentError(f"gaussian gamma must be > 0, got {self.gamma}")
        elif self.kind == "polynomial":
            if not (np.isfinite(self.degree) and self.degree >= 1):
                raise InvalidArgumentError(f"polynomial degree must be >= 1, got {self.degree}")
            if not (np.isfinite(self.offset) and self.offset >= 0):
                raise InvalidArgumentError(f"polynomial offset must be >= 0, got {self.offset}")
        else:
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, gamma):
        return cls("gaussian", gamma=float(gamma))

    @classmethod
    def polynomial(cls, degree, offset=0.0):
        return cls("polynomial", degree=float(degree), offset=float(offset))

    @property
    def is_gaussian(self):
        return self.kind == "gaussian"

    @property
    def integer_degree(self):
        return self.kind == "polynomial" and float(self.degree).is_integer()

    @property
    def is_psd(self):
        """True when the Gram matrix is guaranteed PSD for every input."""
        return self.is_gaussian or self.integer_degree

    def to_dict(self):
        if self.is_gaussian:
            return {"kind": "gaussian", "gamma": self.gamma}
        return {"kind": "polynomial", "degree": self.degree, "offset": self.offset}


def as_data_matrix(X, name="X"):
    """Validate and convert to a float64 ``d x n`` array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return X


def _power(base, degree):
    """``base ** degree`` refusing negative bases under a fractional exponent."""
    if not float(degree).is_integer() and np.any(base <= 0):
        raise DomainError(
            f"polynomial kernel base x^T y + c must be > 0 for non-integer degree {degree}; "
            f"min base = {np.min(base):.6g}"
        )
    return np.power(base, degree)


def kernel_eval(spec, x, y):
    """Evaluate the kernel on two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("non-finite kernel input")
    if spec.is_gaussian:
        diff = x - y
        return float(np.exp(-spec.gamma * np.dot(diff, diff)))
    return float(_power(np.dot(x, y) + spec.offset, spec.degree))


def gram(spec, A):
    """Gram matrix ``K_ij = ker(a_i, a_j)`` of the columns of ``A``.

    Only the upper triangle is computed; the lower triangle is a mirror, so
    the result is exactly symmetric.  The Gaussian diagonal is exactly 1.
    """
    A = as_data_matrix(A, "A")
    n = A.shape[1]
    if spec.is_gaussian:
        if n == 1:
            return np.ones((1, 1))
        # pdist computes each unordered pair once
        K = squareform(np.exp(-spec.gamma * pdist(A.T, "sqeuclidean")))
        np.fill_diagonal(K, 1.0)
        return K
    G = A.T @ A
    iu = np.triu_indices(n)
    K = np.empty((n, n))
    K[iu] = _power(G[iu] + spec.offset, spec.degree)
    K.T[iu] = K[iu]
    return K


def check_gram(K, rtol=1e-12, psd_tol=1e-8):
    """Raise unless ``K`` is square, symmetric and numerically PSD."""
    from .errors import NotPSDError

    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidArgumentError(f"Gram matrix must be square, got {K.shape}")
    scale = max(np.max(np.abs(K)), np.finfo(float).tiny) if K.size else 1.0
    if np.max(np.abs(K - K.T), initial=0.0) > rtol * scale:
        raise InvalidArgumentError("Gram matrix is not symmetric")
    w = np.linalg.eigvalsh(K)
    if w.size and w[0] < -psd_tol * max(w[-1], 0.0):
        raise NotPSDError(f"Gram matrix has eigenvalue {w[0]:.3g} < -{psd_tol} * {w[-1]:.3g}")
    return K
