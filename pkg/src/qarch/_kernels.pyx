# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror :mod:`qarch._recursions_python`."""
from libc.math cimport fabs, sqrt

# volatility map codes, kept in sync with qarch.model.VolatilityMap.code
DEF Q_LINEAR = 0
DEF Q_QUADRATIC = 1
DEF Q_ABS = 2


cdef inline double _vol(double u, int qkind, double c1sq, double c2sq) noexcept nogil:
    if qkind == Q_QUADRATIC:
        return sqrt(c1sq + c2sq * u * u)
    elif qkind == Q_ABS:
        return fabs(u)
    return u


def fill_block(const double[::1] b, const double[::1] zeta, double a, int qkind,
               double c1, double c2, double[::1] r, double[::1] x, double[::1] sigma,
               Py_ssize_t lo, Py_ssize_t hi):
    """Advance the recursion over ``[lo, hi)``.

    ``x[t]`` must already hold the contributions of ``r[s]`` for ``s < lo``;
    the within-block part is accumulated here, lag by lag, before ``sigma``
    and ``r`` are formed.
    """
    cdef Py_ssize_t W = b.shape[0]
    cdef Py_ssize_t t, j, jmax
    cdef double acc
    cdef double c1sq = c1 * c1
    cdef double c2sq = c2 * c2
    with nogil:
        for t in range(lo, hi):
            jmax = t - lo
            if jmax > W:
                jmax = W
            acc = 0.0
            for j in range(1, jmax + 1):
                acc = acc + b[j - 1] * r[t - j]
            x[t] = x[t] + acc
            sigma[t] = _vol(a + x[t], qkind, c1sq, c2sq)
            r[t] = zeta[t] * sigma[t]


def rcar1(const double[::1] eps, const double[::1] eta, double kappa, double b,
          double[::1] out):
    """Random-coefficient AR(1) ``y_t = kappa*eps_t + b*eta_t*y_{t-1}``, ``y_{-1} = 0``."""
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t t
    cdef double prev = 0.0
    with nogil:
        for t in range(n):
            prev = kappa * eps[t] + b * eta[t] * prev
            out[t] = prev


def renewal(const double[::1] alpha, double[::1] out):
    """``out[k-1] = alpha_k + sum_{0<i<k} alpha_i * out[k-i-1]`` for k = 1..len(out)."""
    cdef Py_ssize_t K = out.shape[0]
    cdef Py_ssize_t L = alpha.shape[0]
    cdef Py_ssize_t k, i, imax
    cdef double acc
    with nogil:
        for k in range(1, K + 1):
            acc = alpha[k - 1] if k <= L else 0.0
            imax = k - 1
            if imax > L:
                imax = L
            for i in range(1, imax + 1):
                acc = acc + alpha[i - 1] * out[k - i - 1]
            out[k - 1] = acc
