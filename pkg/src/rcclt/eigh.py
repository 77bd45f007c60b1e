"""Dense symmetric eigendecomposition, implemented in-repo.

Householder tridiagonalization with accumulation of the orthogonal
transform, followed by the implicit-shift QL iteration with eigenvector
updates.  All three phases run under numba with row-contiguous access:
the reduction keeps the full mirrored matrix so its matvec streams rows,
and the transform is carried transposed so both the accumulation and the
QL plane rotations touch contiguous rows.  Strict IEEE arithmetic (no
fastmath), so results are deterministic at any thread count.
numpy.linalg.eigh serves only as the independent oracle in the tests.
"""

import math

import numpy as np
from numba import njit

from .errors import ConvergenceError, UsageError

_EPS = float(np.finfo(np.float64).eps)


@njit(cache=True, nogil=True)
def _reduce(a, d, e, us, hs, p, q):
    """Householder reduction of the full symmetric matrix a (destroyed).

    On exit d/e hold the tridiagonal form (e[i] couples i-1 and i) and
    row i of `us` with scalar hs[i] holds the reflector applied at step i.
    """
    n = a.shape[0]
    for i in range(n - 1, 1, -1):
        scale = 0.0
        for k in range(i):
            scale += abs(a[i, k])
        if scale == 0.0:
            e[i] = a[i, i - 1]
            hs[i] = 0.0
            continue
        h = 0.0
        for k in range(i):
            us[i, k] = a[i, k] / scale
            h += us[i, k] * us[i, k]
        f = us[i, i - 1]
        g = -math.copysign(math.sqrt(h), f)
        e[i] = scale * g
        h -= f * g
        us[i, i - 1] = f - g
        hs[i] = h
        updot = 0.0
        for j in range(i):
            s = 0.0
            for k in range(i):
                s += a[j, k] * us[i, k]
            p[j] = s / h
            updot += us[i, j] * p[j]
        corr = updot / (2.0 * h)
        for j in range(i):
            q[j] = p[j] - corr * us[i, j]
        for j in range(i):
            uj = us[i, j]
            qj = q[j]
            for k in range(i):
                a[j, k] -= uj * q[k] + qj * us[i, k]
    if n > 1:
        e[1] = a[1, 0]
    for i in range(n):
        d[i] = a[i, i]


@njit(cache=True, nogil=True)
def _accumulate(zt, us, hs, w):
    """Apply the stored reflectors to the identity, transposed layout."""
    n = zt.shape[0]
    for i in range(2, n):
        if hs[i] == 0.0:
            continue
        h = hs[i]
        for c in range(i):
            s = 0.0
            for k in range(i):
                s += us[i, k] * zt[c, k]
            w[c] = s / h
        for c in range(i):
            wc = w[c]
            for k in range(i):
                zt[c, k] -= wc * us[i, k]


@njit(cache=True, nogil=True)
def _ql_implicit(d, e, zt, eps):
    """QL with implicit shifts on (d, e), rotating zt's rows along.

    Returns -1 on success, else the index that failed to converge.
    """
    n = d.shape[0]
    for i in range(1, n):
        e[i - 1] = e[i]
    e[n - 1] = 0.0
    for l in range(n):
        n_iter = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd + 1e-300:
                    break
                m += 1
            if m == l:
                break
            n_iter += 1
            if n_iter > 50:
                return l
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = zt[i + 1, k]
                    zt[i + 1, k] = s * zt[i, k] + c * f
                    zt[i, k] = c * zt[i, k] - s * f
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def symmetric_eigh(A):
    """Eigenvalues (ascending) and orthonormal eigenvector columns of A."""
    a = np.array(A, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise UsageError("matrix must be square")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    scale = float(np.abs(a).max())
    if n > 1 and np.abs(a - a.T).max() > 1e-12 * max(1.0, scale):
        raise UsageError("matrix is not symmetric")
    d = np.zeros(n)
    e = np.zeros(n)
    us = np.zeros((n, n))
    hs = np.zeros(n)
    work1 = np.zeros(n)
    work2 = np.zeros(n)
    _reduce(a, d, e, us, hs, work1, work2)
    zt = np.eye(n)
    _accumulate(zt, us, hs, work1)
    info = _ql_implicit(d, e, zt, _EPS)
    if info >= 0:
        raise ConvergenceError(
            f"QL iteration failed at eigenvalue {info} (matrix scale {scale:.3e})",
            residual=float(np.abs(e).max()), iterations=50,
        )
    order = np.argsort(d, kind="stable")
    return d[order], np.ascontiguousarray(zt[order].T)
