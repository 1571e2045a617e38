"""Pure-numpy column kernels (fallback for the compiled ``_core`` extension).

Both backends expose the same two functions:

``value_grad(kind, a, cols, m, w, i, weight, gamma, degree, offset, x, fid_w)``
    Smooth part ``weight * sum_j w_j (m_j - k(a, a_j))^2`` of one column
    problem and its gradient.  For the polynomial kernel a nonzero ``fid_w``
    adds ``fid_w * ((a^T a + c)^d - 2 (a^T x + c)^d)``, the ``a``-dependent
    part of the kernel distance to ``x``.  ``cols`` is ``n x d`` (one sample per row);
    row ``i`` is ignored and the self term uses ``a`` itself.  Returns
    ``(inf, nan-grad)`` when a fractional power meets a non-positive base.

``apg(kind, a0, cols, m, w, i, weight, gamma, degree, offset,
      x, fid_scale, tau_a, tau_x, fid_w, tol, max_iter, trace)``
    Monotone accelerated proximal gradient with Lipschitz backtracking on
    ``f + g``.  ``trace`` is ``None`` or a float array of length
    ``max_iter + 1`` that receives ``F(a^0), F(a^1), ...``.
    Returns ``(a, n_iter, L)``.

``kind`` is 0 for the Gaussian kernel and 1 for the polynomial kernel.
"""
import math

import numpy as np

GAUSSIAN = 0
POLYNOMIAL = 1

_MAX_DOUBLINGS = 200


def value_grad(kind, a, cols, m, w, i, weight, gamma, degree, offset, x=None, fid_w=0.0):
    if kind == GAUSSIAN:
        diff = a[None, :] - cols
        e = np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))
        e[i] = 1.0
        r = m - e
        f = weight * float(np.dot(w, r * r))
        coef = (4.0 * gamma * weight) * (w * r * e)
        coef[i] = 0.0
        grad = coef @ diff
        return f, grad
    base = cols @ a + offset
    base[i] = float(np.dot(a, a)) + offset
    if not float(degree).is_integer() and np.any(base <= 0):
        return math.inf, np.full_like(a, np.nan)
    q = np.power(base, degree)
    r = m - q
    f = weight * float(np.dot(w, r * r))
    coef = (-2.0 * weight * degree) * (w * r * np.power(base, degree - 1.0))
    self_coef = coef[i]
    coef[i] = 0.0
    grad = coef @ cols + (2.0 * self_coef) * a
    if fid_w != 0.0:
        b_aa = base[i]
        b_ax = float(np.dot(a, x)) + offset
        if b_ax <= 0 and not float(degree).is_integer():
            return math.inf, np.full_like(a, np.nan)
        f += fid_w * (b_aa**degree - 2.0 * b_ax**degree)
        grad = grad + (2.0 * fid_w * degree) * (b_aa ** (degree - 1.0) * a - b_ax ** (degree - 1.0) * x)
    return f, grad


def g_value(kind, u, x, fid_scale, tau_a, tau_x):
    d = u - x
    if kind == GAUSSIAN:
        return fid_scale * float(np.dot(d, d))
    return fid_scale * float(np.dot(tau_a * u - tau_x * x, d))


def prox(kind, z, delta, x, fid_scale, tau_a, tau_x):
    """Minimiser of ``g(u) + ||u - z||^2 / (2 delta)``, or None if that is not strongly convex."""
    if kind == GAUSSIAN:
        c = 2.0 * delta * fid_scale
        return (z + c * x) / (1.0 + c)
    denom = 2.0 * fid_scale * tau_a + 1.0 / delta
    if not denom > 0:
        return None
    return (z / delta + (fid_scale * (tau_a + tau_x)) * x) / denom


def _prox_step(kind, point, f_p, g_p, L, x, fid_scale, tau_a, tau_x, vg):
    """Backtracked proximal step from ``point``; returns (u, f_u, grad_u, L)."""
    for _ in range(_MAX_DOUBLINGS):
        delta = 0.99 / L
        u = prox(kind, point - delta * g_p, delta, x, fid_scale, tau_a, tau_x)
        if u is not None:
            f_u, g_u = vg(u)
            d = u - point
            if f_u <= f_p + float(np.dot(g_p, d)) + 0.5 * L * float(np.dot(d, d)):
                return u, f_u, g_u, L
        L *= 2.0
    return None, math.inf, None, L


def apg(kind, a0, cols, m, w, i, weight, gamma, degree, offset,
        x, fid_scale, tau_a, tau_x, fid_w, tol, max_iter, trace):
    def vg(u):
        return value_grad(kind, u, cols, m, w, i, weight, gamma, degree, offset, x, fid_w)

    def big_f(f_u, u):
        return f_u + g_value(kind, u, x, fid_scale, tau_a, tau_x)

    a = np.array(a0, dtype=np.float64)
    a_prev = a.copy()
    z = a.copy()
    t_prev = t = 1.0
    f_a, g_a = vg(a)
    F_a = big_f(f_a, a)
    if not math.isfinite(F_a):
        return a, -1, math.nan
    L = max(1.0, float(np.linalg.norm(g_a)) / max(1e-8, float(np.linalg.norm(a))))
    if trace is not None:
        trace[0] = F_a
    k = 0
    while k < max_iter:
        y = a + (t_prev / t) * (z - a) + ((t_prev - 1.0) / t) * (a - a_prev)
        same = np.array_equal(y, a)
        if same:
            f_y, g_y = f_a, g_a
        else:
            f_y, g_y = vg(y)
        if math.isfinite(f_y):
            z, f_z, g_z, L = _prox_step(kind, y, f_y, g_y, L, x, fid_scale, tau_a, tau_x, vg)
        else:
            z, f_z, g_z = None, math.inf, None
        if same and z is not None:
            v, f_v, g_v = z, f_z, g_z
        else:
            v, f_v, g_v, L = _prox_step(kind, a, f_a, g_a, L, x, fid_scale, tau_a, tau_x, vg)
        if v is None:
            return a, -1, L
        F_z = big_f(f_z, z) if z is not None else math.inf
        F_v = big_f(f_v, v)
        if z is None:
            z = v
        if F_z <= F_v:
            a_new, F_new, f_new, g_new = z, F_z, f_z, g_z
        else:
            a_new, F_new, f_new, g_new = v, F_v, f_v, g_v
        t_prev, t = t, 0.5 * (math.sqrt(4.0 * t * t + 1.0) + 1.0)
        k += 1
        if not F_new <= F_a:
            # round-off only; never accept an increase
            if trace is not None:
                trace[k] = F_a
            break
        step = float(np.linalg.norm(a_new - a))
        scale = 1.0 + float(np.linalg.norm(a))
        a_prev, a = a, a_new
        f_a, g_a, F_a = f_new, g_new, F_new
        if trace is not None:
            trace[k] = F_a
        if step <= tol * scale:
            break
    return a, k, L
