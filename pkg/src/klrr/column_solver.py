"""Per-column subproblem: IRLS reweighting wrapped around a monotone APG.

With every other column fixed, column ``a_i`` minimises the smoothed
objective

    sqrt(s_i(a) + mu^2) + alpha/2 * sum_j w_j (m_ij - k(a, a_j))^2,

    s_i(a) = k(a, a) + k(x_i, x_i) - 2 k(a, x_i)

(the kernel-space distance to the observation).  Each IRLS sweep replaces
the square-root term by a surrogate built at the current point and hands
``f + g`` to the APG core: ``f`` is the weighted Gram-residual sum, ``g`` a
quadratic fidelity surrogate whose prox is closed form.

Gaussian kernel: the square root is a concave function of ``||a - x||^2``,
so its tangent in that variable is a quadratic majoriser and goes into ``g``.
Polynomial kernel: ``s_i`` itself is not quadratic; the tangent of the
square root in ``s`` gives ``delta/2 * s_i(a)``, which is kept exact inside
``f`` (``fid_weight``) with ``g = 0``.  Either way every sweep minimises a
true majoriser, so the smoothed objective cannot go up.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DomainError, InvalidArgumentError, NumericalError, StepSizeError
from .kernel import KernelSpec, _power

GAUSSIAN = 0
POLYNOMIAL = 1


def _kind(spec):
    return GAUSSIAN if spec.is_gaussian else POLYNOMIAL


def next_t(t):
    """Momentum sequence ``t_{k+1} = (sqrt(4 t_k^2 + 1) + 1) / 2``."""
    return 0.5 * (math.sqrt(4.0 * t * t + 1.0) + 1.0)


@dataclass
class ColumnProblem:
    """One column subproblem with its current IRLS linearisation.

    ``others`` is the ``d x n`` data matrix holding the latest values of the
    other columns; its column ``index`` is ignored (the self term uses the
    variable itself).  ``row_weights`` default to ones.
    """

    index: int
    a_current: np.ndarray
    x_obs: np.ndarray
    others: np.ndarray
    m_row: np.ndarray
    weight: float
    spec: KernelSpec
    smooth_mu: float = 1e-4
    row_weights: np.ndarray | None = None
    fid_scale: float = 1.0
    tau_a: float = 1.0
    tau_x: float = 1.0
    fid_weight: float = 0.0
    _cols: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.a_current = np.asarray(self.a_current, dtype=np.float64)
        self.x_obs = np.asarray(self.x_obs, dtype=np.float64)
        self.m_row = np.ascontiguousarray(self.m_row, dtype=np.float64)
        d, n = np.shape(self.others)
        if self.a_current.shape != (d,) or self.x_obs.shape != (d,):
            raise InvalidArgumentError("a_current and x_obs must have the ambient dimension of others")
        if self.m_row.shape != (n,):
            raise InvalidArgumentError(f"m_row must have length {n}")
        if not 0 <= self.index < n:
            raise InvalidArgumentError(f"index {self.index} out of range for {n} columns")
        if not (self.weight > 0 and self.smooth_mu > 0):
            raise InvalidArgumentError("weight and smooth_mu must be > 0")
        if self.row_weights is None:
            self.row_weights = np.ones(n)
        self.row_weights = np.ascontiguousarray(self.row_weights, dtype=np.float64)
        self._cols = np.ascontiguousarray(np.asarray(self.others, dtype=np.float64).T)

    @property
    def kind(self):
        return _kind(self.spec)


@dataclass
class ApgResult:
    a: np.ndarray
    iterations: int
    lipschitz: float
    trace: np.ndarray | None = None


@dataclass
class ColumnResult:
    a: np.ndarray
    objective_trace: list
    sweeps: int
    rejected: int = 0
    inner_iterations: int = 0


# -- reweighting ----------------------------------------------------------

def reweight_gaussian(a_i, x_i, gamma, smooth_mu):
    """IRLS weights for the Gaussian kernel: ``p = exp(-gamma ||a - x||^2)`` and
    ``beta = 1 / sqrt(2 - 2 p + mu^2)``."""
    diff = np.asarray(a_i, dtype=np.float64) - np.asarray(x_i, dtype=np.float64)
    p = math.exp(-gamma * float(np.dot(diff, diff)))
    beta = 1.0 / math.sqrt(max(2.0 - 2.0 * p, 0.0) + smooth_mu * smooth_mu)
    return p, beta


def reweight_polynomial(a_i, x_i, degree, offset, smooth_mu):
    """IRLS weights for the polynomial kernel.

    Returns ``(tau_a, tau_x, delta)`` with ``tau_a = (a^T a + c)^(d-1)``,
    ``tau_x = (a^T x + c)^(d-1)`` and
    ``delta = 1 / sqrt((a^T a + c)^d + (x^T x + c)^d - 2 (a^T x + c)^d + mu^2)``.
    """
    a_i = np.asarray(a_i, dtype=np.float64)
    x_i = np.asarray(x_i, dtype=np.float64)
    base_aa = float(np.dot(a_i, a_i)) + offset
    base_xx = float(np.dot(x_i, x_i)) + offset
    base_ax = float(np.dot(a_i, x_i)) + offset
    bases = np.array([base_aa, base_xx, base_ax])
    qa, qx, qax = _power(bases, degree)
    ta, tax = _power(np.array([base_aa, base_ax]), degree - 1.0)
    radicand = qa + qx - 2.0 * qax + smooth_mu * smooth_mu
    if not radicand > 0:
        raise DomainError(f"non-positive IRLS radicand {radicand:.6g}")
    return float(ta), float(tax), 1.0 / math.sqrt(radicand)


# -- smooth part, prox, APG -----------------------------------------------

def smooth_part_value_grad(prob, a, backend=None):
    """``f(a) = weight * sum_j w_j (m_ij - k(a, a_j))^2`` and its gradient."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    core = _backend.get(backend)
    s = prob.spec
    f, g = core.value_grad(prob.kind, a, prob._cols, prob.m_row, prob.row_weights,
                           prob.index, prob.weight, s.gamma, s.degree, s.offset,
                           prob.x_obs, prob.fid_weight)
    if not math.isfinite(f):
        raise DomainError("polynomial kernel base non-positive under fractional degree")
    return f, g


def prox_g(kind, z, delta, x, tau_a=1.0, tau_x=1.0, scale=1.0):
    """Proximal map of the fidelity surrogate ``g``.

    ``kind`` is ``"gaussian"`` (``g(u) = scale ||u - x||^2``) or
    ``"polynomial"`` (``g(u) = scale (tau_a u - tau_x x)^T (u - x)``).
    """
    if not delta > 0:
        raise InvalidArgumentError("delta must be > 0")
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if kind in ("gaussian", GAUSSIAN):
        c = 2.0 * delta * scale
        return (z + c * x) / (1.0 + c)
    denom = 2.0 * scale * tau_a + 1.0 / delta
    if not denom > 0:
        raise StepSizeError("prox subproblem not strongly convex; reduce delta", delta=delta, tau_a=tau_a)
    return (z / delta + scale * (tau_a + tau_x) * x) / denom


def apg_minimize_column(prob, init=None, max_inner=200, tol_inner=1e-8, backend=None, record=False):
    """Minimise ``f + g`` for one column with the monotone APG core."""
    init = prob.a_current if init is None else init
    init = np.ascontiguousarray(init, dtype=np.float64)
    core = _backend.get(backend)
    trace = np.full(max_inner + 1, np.nan) if record else None
    s = prob.spec
    a, k, L = core.apg(prob.kind, init, prob._cols, prob.m_row, prob.row_weights, prob.index,
                       prob.weight, s.gamma, s.degree, s.offset, np.ascontiguousarray(prob.x_obs),
                       prob.fid_scale, prob.tau_a, prob.tau_x, prob.fid_weight, tol_inner,
                       max_inner, trace)
    if k < 0:
        raise NumericalError("APG failed: non-finite objective or no admissible step",
                             iterate=a, lipschitz=L, column=prob.index)
    if record:
        trace = trace[: k + 1]
    return ApgResult(a, k, L, trace)


# -- smoothed column objective ---------------------------------------------

def row_weights_for(n, i, column_model):
    if column_model == "literal":
        return np.ones(n)
    w = np.full(n, 2.0)
    w[i] = 1.0
    return w


def _fidelity(spec, a, x, smooth_mu):
    """Smoothed kernel distance ``sqrt(s + mu^2)`` and ``grad s``."""
    if spec.is_gaussian:
        diff = a - x
        e = math.exp(-spec.gamma * float(np.dot(diff, diff)))
        s = 2.0 - 2.0 * e
        ds = (4.0 * spec.gamma * e) * diff
    else:
        c, d = spec.offset, spec.degree
        baa = float(np.dot(a, a)) + c
        bax = float(np.dot(a, x)) + c
        bxx = float(np.dot(x, x)) + c
        qa, qx, qax = _power(np.array([baa, bxx, bax]), d)
        ta, tax = _power(np.array([baa, bax]), d - 1.0)
        s = qa + qx - 2.0 * qax
        ds = 2.0 * d * (ta * a - tax * x)
    s = max(s, 0.0)
    return math.sqrt(s + smooth_mu * smooth_mu), ds


def column_objective(spec, a, x, A, m_row, i, alpha, smooth_mu, row_weights=None, backend=None):
    """Smoothed per-column objective; ``A`` supplies the other columns."""
    prob = ColumnProblem(i, a, x, A, m_row, 0.5 * alpha if alpha > 0 else 1.0, spec,
                         smooth_mu, row_weights)
    fid, _ = _fidelity(spec, prob.a_current, prob.x_obs, smooth_mu)
    if alpha == 0:
        return fid
    f, _ = smooth_part_value_grad(prob, prob.a_current, backend)
    return fid + f


def column_objective_grad(spec, a, x, A, m_row, i, alpha, smooth_mu, row_weights=None, backend=None):
    """Gradient of :func:`column_objective` with respect to ``a``."""
    prob = ColumnProblem(i, a, x, A, m_row, 0.5 * alpha if alpha > 0 else 1.0, spec,
                         smooth_mu, row_weights)
    fid, ds = _fidelity(spec, prob.a_current, prob.x_obs, smooth_mu)
    g = ds / (2.0 * fid)
    if alpha == 0:
        return g
    _, gf = smooth_part_value_grad(prob, prob.a_current, backend)
    return g + gf


def _linearize(spec, a, x, alpha, smooth_mu, column_model):
    """``(weight, fid_scale, tau_a, tau_x, fid_weight)`` for one IRLS sweep.

    Gaussian: the square root is majorised at ``a`` by ``const + c_fid g(u)``
    and the surrogate is divided through by ``c_fid`` so ``g`` enters with
    unit scale (unless ``c_fid`` underflows).  Polynomial, exact model: the
    fidelity goes into ``f`` as ``delta/2 * s(u)`` and ``g`` is switched off.
    """
    literal = column_model == "literal"
    if spec.is_gaussian:
        p, beta = reweight_gaussian(a, x, spec.gamma, smooth_mu)
        c_fid = (2.0 if literal else 1.0) * spec.gamma * beta * p
        if c_fid > 1e-300:
            return 0.5 * alpha / c_fid, 1.0, 1.0, 1.0, 0.0
        return 0.5 * alpha, c_fid, 1.0, 1.0, 0.0
    tau_a, tau_x, delta = reweight_polynomial(a, x, spec.degree, spec.offset, smooth_mu)
    if not literal:
        return 0.5 * alpha, 0.0, 1.0, 1.0, 0.5 * delta
    c_fid = 2.0 * spec.degree * delta
    return 0.5 * alpha / c_fid, 1.0, tau_a, tau_x, 0.0


def solve_column(A, X, M, i, cfg, backend=None):
    """IRLS loop for column ``i`` with the other columns of ``A`` held fixed.

    Each sweep re-linearises at the latest ``a_i`` and runs the APG core.  A
    sweep whose result raises the smoothed column objective is discarded and
    the loop stops; ``objective_trace`` holds the objective at the start and
    after every sweep (including a discarded one).
    """
    spec = cfg.kernel
    n = A.shape[1]
    alpha = cfg.alpha
    x = np.ascontiguousarray(X[:, i], dtype=np.float64)
    m_row = np.ascontiguousarray(M[i], dtype=np.float64)
    w = row_weights_for(n, i, cfg.column_model)
    a = np.array(A[:, i], dtype=np.float64)
    base = ColumnProblem(i, a, x, A, m_row, 1.0, spec, cfg.smooth_mu, w)
    core = _backend.get(backend if backend is not None else cfg.backend)

    def phi(u):
        fid, _ = _fidelity(spec, u, x, cfg.smooth_mu)
        f, _ = core.value_grad(base.kind, u, base._cols, m_row, w, i, 0.5 * alpha,
                               spec.gamma, spec.degree, spec.offset)
        return fid + f

    current = phi(a)
    if not math.isfinite(current):
        raise NumericalError("non-finite column objective", column=i, iterate=a)
    trace = [current]
    rejected = 0
    inner = 0
    sweeps = 0
    for sweeps in range(1, cfg.max_irls + 1):
        weight, fid_scale, tau_a, tau_x, fid_w = _linearize(spec, a, x, alpha, cfg.smooth_mu,
                                                            cfg.column_model)
        a_new, k, L = core.apg(base.kind, a, base._cols, m_row, w, i, weight, spec.gamma,
                               spec.degree, spec.offset, x, fid_scale, tau_a, tau_x, fid_w,
                               cfg.tol_inner, cfg.max_inner, None)
        if k < 0:
            raise NumericalError("APG failed on column", column=i, iterate=a, lipschitz=L)
        inner += k
        value = phi(a_new)
        trace.append(value)
        if not value <= current:
            rejected += 1
            break
        decrease = current - value
        a, current = a_new, value
        if decrease <= cfg.tol_irls * (1.0 + abs(current)):
            break
    return ColumnResult(a, trace, sweeps, rejected, inner)
