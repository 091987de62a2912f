"""Hot inner loops, with numba and pure-numpy implementations.

The numba versions are used when numba imports and the environment variable
``SPHKERNELS_BACKEND`` is not set to ``numpy``.  The numba loops use Kahan
summation in ascending index order; the numpy path uses ``math.fsum``
(correctly rounded).  Both are independent of thread scheduling and agree to a
few ulps.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

BACKEND = os.environ.get("SPHKERNELS_BACKEND", "numba" if HAS_NUMBA else "numpy").lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"SPHKERNELS_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if BACKEND == "numba" and not HAS_NUMBA:
    BACKEND = "numpy"


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------

def legendre_table_numpy(d, k_max, t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty((k_max + 1, t.size))
    out[0] = 1.0
    if k_max >= 1:
        out[1] = t
    for k in range(1, k_max):
        out[k + 1] = (2 * k + d - 2) / (k + d - 2) * t * out[k] - k / (k + d - 2) * out[k - 1]
    return out


def weighted_row_sums_numpy(table, v):
    prod = table * v
    return np.array([math.fsum(row) for row in prod])


def series_project_numpy(b, d, k_max):
    # mu_k = sum_{n >= k, n = k mod 2} b_n lambda_{n,k}; lambda advanced in n by
    # lambda_{n+2,k} = lambda_{n,k} (n+1)(n+2) / ((n+2-k)(n+k+d)).
    b = np.asarray(b, dtype=np.float64)
    n_max = b.size - 1
    mu = np.zeros(k_max + 1)
    diag = 1.0
    for k in range(k_max + 1):
        if k > 0:
            diag *= k / (2.0 * k + d - 2.0)
        if k > n_max:
            continue
        n = np.arange(k, n_max - 1, 2, dtype=np.float64)
        ratios = (n + 1.0) * (n + 2.0) / ((n + 2.0 - k) * (n + k + d))
        lam = np.empty(n.size + 1)
        lam[0] = diag
        np.cumprod(ratios, out=lam[1:])
        lam[1:] *= diag
        terms = b[k::2][: lam.size] * lam[: b[k::2].size]
        mu[k] = math.fsum(terms)
    return mu


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def legendre_table_numba(d, k_max, t):
        n = t.size
        out = np.empty((k_max + 1, n))
        for j in range(n):
            out[0, j] = 1.0
            if k_max >= 1:
                out[1, j] = t[j]
        for k in range(1, k_max):
            a = (2 * k + d - 2) / (k + d - 2)
            c = k / (k + d - 2)
            for j in range(n):
                out[k + 1, j] = a * t[j] * out[k, j] - c * out[k - 1, j]
        return out

    @njit(cache=True)
    def weighted_row_sums_numba(table, v):
        rows, cols = table.shape
        acc = np.zeros(rows)
        for i in range(rows):
            a = 0.0
            c = 0.0
            for j in range(cols):
                y = table[i, j] * v[j] - c
                s = a + y
                c = (s - a) - y
                a = s
            acc[i] = a
        return acc

    @njit(cache=True)
    def series_project_numba(b, d, k_max):
        n_max = b.size - 1
        mu = np.zeros(k_max + 1)
        diag = 1.0
        for k in range(k_max + 1):
            if k > 0:
                diag *= k / (2.0 * k + d - 2.0)
            if k > n_max:
                continue
            lam = diag
            a = 0.0
            c = 0.0
            n = k
            while n <= n_max:
                y = b[n] * lam - c
                s = a + y
                c = (s - a) - y
                a = s
                lam = lam_next(lam, n, k, d)
                n += 2
            mu[k] = a
        return mu

    @njit(cache=True, inline="always")
    def lam_next(lam, n, k, d):
        return lam * ((n + 1.0) * (n + 2.0) / ((n + 2.0 - k) * (n + k + d)))

else:  # pragma: no cover
    legendre_table_numba = None
    weighted_row_sums_numba = None
    series_project_numba = None


def legendre_table(d, k_max, t):
    t = np.ascontiguousarray(t, dtype=np.float64).ravel()
    if BACKEND == "numba":
        return legendre_table_numba(int(d), int(k_max), t)
    return legendre_table_numpy(d, k_max, t)


def weighted_row_sums(table, v):
    table = np.ascontiguousarray(table, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if BACKEND == "numba":
        return weighted_row_sums_numba(table, v)
    return weighted_row_sums_numpy(table, v)


def series_project(b, d, k_max):
    b = np.ascontiguousarray(b, dtype=np.float64)
    if BACKEND == "numba":
        return series_project_numba(b, float(d), int(k_max))
    return series_project_numpy(b, float(d), int(k_max))
