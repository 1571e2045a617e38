# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled column kernels.  Same contract as ``klrr._core_py``."""
import numpy as np

from libc.math cimport exp, pow, sqrt, floor, INFINITY, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

DEF MAX_DOUBLINGS = 200


cdef double _dot(const double* u, const double* v, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t l
    for l in range(d):
        s += u[l] * v[l]
    return s


cdef double _value_grad(int kind, const double* a, const double[:, ::1] cols,
                        const double[::1] m, const double[::1] w, Py_ssize_t i,
                        double weight, double gamma, double degree, double offset,
                        const double* x, double fid_w, double* grad) noexcept nogil:
    cdef Py_ssize_t n = cols.shape[0], d = cols.shape[1], j, l
    cdef double f = 0.0, s, e, r, c, base, self_coef = 0.0, b_aa = 0.0, b_ax
    cdef bint fractional = degree != floor(degree)
    for l in range(d):
        grad[l] = 0.0
    if kind == 0:
        for j in range(n):
            if j == i:
                r = m[j] - 1.0
                f += w[j] * r * r
                continue
            s = 0.0
            for l in range(d):
                c = a[l] - cols[j, l]
                s += c * c
            e = exp(-gamma * s)
            r = m[j] - e
            f += w[j] * r * r
            c = 4.0 * gamma * weight * w[j] * r * e
            for l in range(d):
                grad[l] += c * (a[l] - cols[j, l])
        return weight * f
    for j in range(n):
        s = 0.0
        if j == i:
            for l in range(d):
                s += a[l] * a[l]
        else:
            for l in range(d):
                s += a[l] * cols[j, l]
        base = s + offset
        if fractional and base <= 0.0:
            return INFINITY
        if j == i:
            b_aa = base
        r = m[j] - pow(base, degree)
        f += w[j] * r * r
        c = -2.0 * weight * degree * w[j] * r * pow(base, degree - 1.0)
        if j == i:
            self_coef = c
        else:
            for l in range(d):
                grad[l] += c * cols[j, l]
    for l in range(d):
        grad[l] += 2.0 * self_coef * a[l]
    f *= weight
    if fid_w != 0.0:
        b_ax = _dot(a, x, d) + offset
        if fractional and b_ax <= 0.0:
            return INFINITY
        f += fid_w * (pow(b_aa, degree) - 2.0 * pow(b_ax, degree))
        e = 2.0 * fid_w * degree * pow(b_aa, degree - 1.0)
        c = 2.0 * fid_w * degree * pow(b_ax, degree - 1.0)
        for l in range(d):
            grad[l] += e * a[l] - c * x[l]
    return f


cdef double _g(int kind, const double* u, const double* x, Py_ssize_t d,
               double fid_scale, double tau_a, double tau_x) noexcept nogil:
    cdef double s = 0.0, c
    cdef Py_ssize_t l
    if kind == 0:
        for l in range(d):
            c = u[l] - x[l]
            s += c * c
    else:
        for l in range(d):
            s += (tau_a * u[l] - tau_x * x[l]) * (u[l] - x[l])
    return fid_scale * s


cdef bint _prox(int kind, const double* point, const double* gp, double delta,
                const double* x, Py_ssize_t d, double fid_scale, double tau_a,
                double tau_x, double* out) noexcept nogil:
    cdef double c, denom
    cdef Py_ssize_t l
    if kind == 0:
        c = 2.0 * delta * fid_scale
        for l in range(d):
            out[l] = ((point[l] - delta * gp[l]) + c * x[l]) / (1.0 + c)
        return True
    denom = 2.0 * fid_scale * tau_a + 1.0 / delta
    if not denom > 0.0:
        return False
    for l in range(d):
        out[l] = ((point[l] - delta * gp[l]) / delta
                  + fid_scale * (tau_a + tau_x) * x[l]) / denom
    return True


cdef bint _prox_step(int kind, const double* point, double f_p, const double* g_p,
                     double* L, const double* x, double fid_scale, double tau_a,
                     double tau_x, const double[:, ::1] cols, const double[::1] m,
                     const double[::1] w, Py_ssize_t i, double weight, double gamma,
                     double degree, double offset, double fid_w, double* u, double* f_u,
                     double* g_u) noexcept nogil:
    cdef Py_ssize_t d = cols.shape[1], l, it
    cdef double delta, lin, sq, c
    for it in range(MAX_DOUBLINGS):
        delta = 0.99 / L[0]
        if _prox(kind, point, g_p, delta, x, d, fid_scale, tau_a, tau_x, u):
            f_u[0] = _value_grad(kind, u, cols, m, w, i, weight, gamma, degree, offset, x, fid_w, g_u)
            lin = 0.0
            sq = 0.0
            for l in range(d):
                c = u[l] - point[l]
                lin += g_p[l] * c
                sq += c * c
            if f_u[0] <= f_p + lin + 0.5 * L[0] * sq:
                return True
        L[0] *= 2.0
    return False


def value_grad(int kind, double[::1] a, const double[:, ::1] cols, const double[::1] m,
               const double[::1] w, Py_ssize_t i, double weight, double gamma,
               double degree, double offset, x=None, double fid_w=0.0):
    grad = np.empty(a.shape[0])
    cdef double[::1] gv = grad
    cdef double[::1] xv
    cdef const double* xp = NULL
    cdef double f
    if fid_w != 0.0:
        xv = np.ascontiguousarray(x, dtype=np.float64)
        xp = &xv[0]
    with nogil:
        f = _value_grad(kind, &a[0], cols, m, w, i, weight, gamma, degree, offset, xp, fid_w, &gv[0])
    if not isfinite(f):
        grad[:] = np.nan
    return f, grad


def apg(int kind, a0, const double[:, ::1] cols, const double[::1] m, const double[::1] w,
        Py_ssize_t i, double weight, double gamma, double degree, double offset,
        const double[::1] x, double fid_scale, double tau_a, double tau_x, double fid_w,
        double tol, Py_ssize_t max_iter, trace):
    cdef Py_ssize_t d = cols.shape[1], l, k = 0
    out = np.array(a0, dtype=np.float64)
    cdef double[::1] outv = out
    cdef double[::1] tr
    cdef bint record = trace is not None
    if record:
        tr = trace
    # work buffers: a, a_prev, z, y, g_a, g_y, zc, g_z, v, g_v
    cdef double* buf = <double*> malloc(10 * d * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* a = buf
    cdef double* a_prev = buf + d
    cdef double* z = buf + 2 * d
    cdef double* y = buf + 3 * d
    cdef double* g_a = buf + 4 * d
    cdef double* g_y = buf + 5 * d
    cdef double* zc = buf + 6 * d
    cdef double* g_z = buf + 7 * d
    cdef double* v = buf + 8 * d
    cdef double* g_v = buf + 9 * d
    cdef double* tmp
    cdef double t_prev = 1.0, t = 1.0, f_a, F_a, f_y, f_z = INFINITY, f_v = INFINITY
    cdef double F_z, F_v, F_new, L = 0.0, na, step, scale, c1, c2, ga
    cdef bint same, z_ok, v_ok, failed = False
    try:
        with nogil:
            for l in range(d):
                a[l] = outv[l]
                a_prev[l] = outv[l]
                z[l] = outv[l]
            f_a = _value_grad(kind, a, cols, m, w, i, weight, gamma, degree, offset, &x[0], fid_w, g_a)
            F_a = f_a + _g(kind, a, &x[0], d, fid_scale, tau_a, tau_x)
            if not isfinite(F_a):
                failed = True
            else:
                ga = sqrt(_dot(g_a, g_a, d))
                na = sqrt(_dot(a, a, d))
                L = ga / (na if na > 1e-8 else 1e-8)
                if L < 1.0:
                    L = 1.0
                if record:
                    tr[0] = F_a
                while k < max_iter:
                    c1 = t_prev / t
                    c2 = (t_prev - 1.0) / t
                    same = True
                    for l in range(d):
                        y[l] = a[l] + c1 * (z[l] - a[l]) + c2 * (a[l] - a_prev[l])
                        if y[l] != a[l]:
                            same = False
                    if same:
                        f_y = f_a
                        memcpy(g_y, g_a, d * sizeof(double))
                    else:
                        f_y = _value_grad(kind, y, cols, m, w, i, weight, gamma, degree, offset, &x[0], fid_w, g_y)
                    z_ok = False
                    if isfinite(f_y):
                        z_ok = _prox_step(kind, y, f_y, g_y, &L, &x[0], fid_scale, tau_a, tau_x,
                                          cols, m, w, i, weight, gamma, degree, offset,
                                          fid_w, zc, &f_z, g_z)
                    if same and z_ok:
                        memcpy(v, zc, d * sizeof(double))
                        memcpy(g_v, g_z, d * sizeof(double))
                        f_v = f_z
                        v_ok = True
                    else:
                        v_ok = _prox_step(kind, a, f_a, g_a, &L, &x[0], fid_scale, tau_a, tau_x,
                                          cols, m, w, i, weight, gamma, degree, offset,
                                          fid_w, v, &f_v, g_v)
                    if not v_ok:
                        failed = True
                        break
                    F_z = f_z + _g(kind, zc, &x[0], d, fid_scale, tau_a, tau_x) if z_ok else INFINITY
                    F_v = f_v + _g(kind, v, &x[0], d, fid_scale, tau_a, tau_x)
                    if not z_ok:
                        memcpy(zc, v, d * sizeof(double))
                    t_prev = t
                    t = 0.5 * (sqrt(4.0 * t * t + 1.0) + 1.0)
                    k += 1
                    F_new = F_z if F_z <= F_v else F_v
                    if not F_new <= F_a:
                        if record:
                            tr[k] = F_a
                        break
                    # a_prev <- a ; a <- chosen candidate
                    tmp = a_prev
                    a_prev = a
                    a = tmp
                    if F_z <= F_v:
                        memcpy(a, zc, d * sizeof(double))
                        memcpy(g_a, g_z, d * sizeof(double))
                        f_a = f_z
                    else:
                        memcpy(a, v, d * sizeof(double))
                        memcpy(g_a, g_v, d * sizeof(double))
                        f_a = f_v
                    F_a = F_new
                    memcpy(z, zc, d * sizeof(double))
                    step = 0.0
                    for l in range(d):
                        step += (a[l] - a_prev[l]) * (a[l] - a_prev[l])
                    step = sqrt(step)
                    scale = 1.0 + sqrt(_dot(a_prev, a_prev, d))
                    if record:
                        tr[k] = F_a
                    if step <= tol * scale:
                        break
            for l in range(d):
                outv[l] = a[l]
    finally:
        free(buf)
    if failed:
        return out, -1, L
    return out, k, L
