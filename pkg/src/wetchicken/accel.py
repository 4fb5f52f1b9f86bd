"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The two inner loops that dominate runtime are the ARD squared-exponential
Gram matrix (forward and vector-Jacobian product, hit on every optimizer
step) and the batched Wet-Chicken transition (hit ~1e6 times per
evaluation report). Both exist in two implementations:

* ``*_numba`` -- ``@njit`` compiled loops (default when numba imports),
* ``*_numpy`` -- vectorized numpy with identical accumulation order.

The active path is chosen once at import time. Set the environment flag
``WETCHICKEN_DISABLE_NUMBA=1`` to force the numpy path; it is also taken
automatically when numba is not importable. ``benchmarks/bench_accel.py``
times one path against the other.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("WETCHICKEN_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


# ---------------------------------------------------------------------------
# ARD squared-exponential kernel
#
# K[i, j] = sv * exp(-0.5 * sum_d ((A[i,d] - B[j,d]) / ls[d])^2)
# ---------------------------------------------------------------------------


def ard_sqexp_numpy(A, B, inv_ls, sv):
    n, d = A.shape
    m = B.shape[0]
    d2 = np.zeros((n, m))
    # explicit loop over the (small) input dimension keeps the accumulation
    # order identical to the jitted kernel
    for k in range(d):
        diff = (A[:, k, None] - B[None, :, k]) * inv_ls[k]
        d2 += diff * diff
    return sv * np.exp(-0.5 * d2)


def ard_sqexp_vjp_numpy(G, K, A, B, inv_ls):
    """VJPs of the Gram matrix wrt (A, B, log sv, log lengthscales).

    ``G`` is the upstream gradient with the shape of ``K``. Gradients wrt the
    log-parameters come out directly so callers never divide by a scale.
    """
    GK = G * K
    g_log_sv = GK.sum()
    d = A.shape[1]
    gA = np.zeros_like(A)
    gB = np.zeros_like(B)
    g_log_ls = np.zeros(d)
    for k in range(d):
        diff = A[:, k, None] - B[None, :, k]
        w = inv_ls[k] * inv_ls[k]
        GKdiff = GK * diff
        gA[:, k] = -w * GKdiff.sum(axis=1)
        gB[:, k] = w * GKdiff.sum(axis=0)
        g_log_ls[k] = w * (GKdiff * diff).sum()
    return gA, gB, g_log_sv, g_log_ls


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def ard_sqexp_numba(A, B, inv_ls, sv):  # pragma: no cover - numba path
        n, d = A.shape
        m = B.shape[0]
        K = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    diff = (A[i, k] - B[j, k]) * inv_ls[k]
                    acc += diff * diff
                K[i, j] = sv * np.exp(-0.5 * acc)
        return K

    @njit(cache=True)
    def ard_sqexp_vjp_numba(G, K, A, B, inv_ls):  # pragma: no cover
        n, d = A.shape
        m = B.shape[0]
        gA = np.zeros((n, d))
        gB = np.zeros((m, d))
        g_log_ls = np.zeros(d)
        g_log_sv = 0.0
        for i in range(n):
            for j in range(m):
                gk = G[i, j] * K[i, j]
                g_log_sv += gk
                for k in range(d):
                    diff = A[i, k] - B[j, k]
                    w = inv_ls[k] * inv_ls[k]
                    t = gk * diff * w
                    gA[i, k] -= t
                    gB[j, k] += t
                    g_log_ls[k] += t * diff
        return gA, gB, g_log_sv, g_log_ls

else:  # pragma: no cover
    ard_sqexp_numba = None
    ard_sqexp_vjp_numba = None


# ---------------------------------------------------------------------------
# Batched Wet-Chicken transition
#
# v = 3 y / w, b = 3.5 - v, xh = x + (1.5 ax - 0.5) + v + b tau, yh = y + ay;
# xh > l resets to (0, 0), xh < 0 clamps x to 0, yh clamps into [0, w].
# ---------------------------------------------------------------------------

RIVER_LENGTH = 5.0
RIVER_WIDTH = 5.0


def chicken_step_numpy(x, y, ax, ay, tau):
    v = y * (3.0 / RIVER_WIDTH)
    b = 3.5 - v
    xh = x + (1.5 * ax - 0.5) + v + b * tau
    yh = y + ay
    fell = xh > RIVER_LENGTH
    xn = np.where(fell | (xh < 0.0), 0.0, xh)
    yn = np.where(
        fell | (yh < 0.0), 0.0, np.where(yh > RIVER_WIDTH, RIVER_WIDTH, yh)
    )
    return xn, yn


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def chicken_step_numba(x, y, ax, ay, tau):  # pragma: no cover - numba path
        n = x.shape[0]
        xn = np.empty(n)
        yn = np.empty(n)
        for i in range(n):
            v = y[i] * (3.0 / RIVER_WIDTH)
            b = 3.5 - v
            xh = x[i] + (1.5 * ax[i] - 0.5) + v + b * tau[i]
            yh = y[i] + ay[i]
            if xh > RIVER_LENGTH:
                xn[i] = 0.0
                yn[i] = 0.0
            else:
                xn[i] = 0.0 if xh < 0.0 else xh
                if yh < 0.0:
                    yn[i] = 0.0
                elif yh > RIVER_WIDTH:
                    yn[i] = RIVER_WIDTH
                else:
                    yn[i] = yh
        return xn, yn

else:  # pragma: no cover
    chicken_step_numba = None


if USE_NUMBA:
    ard_sqexp = ard_sqexp_numba
    ard_sqexp_vjp = ard_sqexp_vjp_numba
    chicken_step = chicken_step_numba
else:
    ard_sqexp = ard_sqexp_numpy
    ard_sqexp_vjp = ard_sqexp_vjp_numpy
    chicken_step = chicken_step_numpy
