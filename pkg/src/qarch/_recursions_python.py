"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and the same summation order (lag 1 first), so the two
backends agree to rounding. Used when the extension is unavailable or when
``QARCH_BACKEND=python`` is set.
"""
from __future__ import annotations

import math

import numpy as np

Q_LINEAR = 0
Q_QUADRATIC = 1
Q_ABS = 2


def fill_block(b, zeta, a, qkind, c1, c2, r, x, sigma, lo, hi):
    W = b.shape[0]
    c1sq = c1 * c1
    c2sq = c2 * c2
    for t in range(lo, hi):
        jmax = min(t - lo, W)
        if jmax > 0:
            # r[t-1], r[t-2], ..., r[t-jmax] against b_1..b_jmax
            acc = float(np.dot(b[:jmax], r[t - jmax:t][::-1]))
        else:
            acc = 0.0
        xt = x[t] + acc
        x[t] = xt
        u = a + xt
        if qkind == Q_QUADRATIC:
            s = math.sqrt(c1sq + c2sq * u * u)
        elif qkind == Q_ABS:
            s = abs(u)
        else:
            s = u
        sigma[t] = s
        r[t] = zeta[t] * s


def rcar1(eps, eta, kappa, b, out):
    prev = 0.0
    for t in range(eps.shape[0]):
        prev = kappa * eps[t] + b * eta[t] * prev
        out[t] = prev


def renewal(alpha, out):
    K = out.shape[0]
    L = alpha.shape[0]
    for k in range(1, K + 1):
        acc = alpha[k - 1] if k <= L else 0.0
        imax = min(k - 1, L)
        if imax > 0:
            # alpha_1..alpha_imax against out[k-2], ..., out[k-imax-1]
            acc += float(np.dot(alpha[:imax], out[k - imax - 1:k - 1][::-1]))
        out[k - 1] = acc
