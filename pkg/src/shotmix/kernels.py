"""Hot numerical kernels with numba and pure-numpy twins.

Three operations dominate runtime once corpora reach tens of thousands of
shots: the truncated-Gaussian log-density matrix over (shots x components),
the EM E-step reduction over that matrix, and the per-shot responsibility
weighted value average.  Each has a numba @njit implementation and a numpy
fallback; `backend.BACKEND` picks which one the public names point at.

Kernels assume validated inputs (symmetric positive-definite 2x2
covariances, float64 arrays).  Validation lives in the calling modules.

Conventions:
- points are (n, 2) arrays of (y, z) goal-frame coordinates,
- a point with z < 0 has zero density under every component (-inf log),
- dead mixture weights enter as -inf entries of log_weights and produce
  exactly zero responsibility.
"""

from __future__ import annotations

import math

import numpy as np

from .backend import BACKEND

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


def log_ndtr(x: float) -> float:
    """log of the standard normal CDF, accurate into the lower tail."""
    if x >= -37.0:
        # erfc keeps full precision down to here (no underflow yet)
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # Asymptotic Mills-ratio series once erfc underflows; at |x| >= 37 the
    # truncation error is far below double precision.
    inv2 = 1.0 / (x * x)
    series = -inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)))
    return -0.5 * x * x - math.log(-x) - 0.5 * _LOG_2PI + math.log1p(series)


def ndtr(x: float) -> float:
    """Standard normal CDF."""
    return 0.5 * math.erfc(-x / _SQRT2)


# ---------------------------------------------------------------------------
# numpy implementations


def _trunc_log_density_matrix_numpy(pts, means, covs):
    n = pts.shape[0]
    k = means.shape[0]
    a = covs[:, 0, 0]
    b = covs[:, 0, 1]
    c = covs[:, 1, 1]
    det = a * c - b * b
    log_acc = np.array(
        [log_ndtr(means[j, 1] / math.sqrt(c[j])) for j in range(k)]
    )
    log_norm = -_LOG_2PI - 0.5 * np.log(det) - log_acc
    dy = pts[:, 0][:, None] - means[:, 0][None, :]
    dz = pts[:, 1][:, None] - means[:, 1][None, :]
    quad = (dy * dy * c[None, :] - 2.0 * dy * dz * b[None, :] + dz * dz * a[None, :]) / det[None, :]
    out = log_norm[None, :] - 0.5 * quad
    out[pts[:, 1] < 0.0, :] = -np.inf
    return out


def _em_estep_numpy(log_dens, log_weights):
    scored = log_dens + log_weights[None, :]
    row_max = np.max(scored, axis=1)
    finite = row_max > -np.inf
    with np.errstate(invalid="ignore"):
        shifted = np.exp(scored - row_max[:, None])
    shifted[~finite, :] = 0.0
    row_sum = shifted.sum(axis=1)
    loglik = float(np.sum(np.log(row_sum[finite]) + row_max[finite]))
    if not finite.all():
        loglik = -np.inf
    resp = shifted / np.where(row_sum > 0.0, row_sum, 1.0)[:, None]
    return loglik, resp.sum(axis=0)


def _weighted_value_rows_numpy(log_dens, log_weights, values):
    scored = log_dens + log_weights[None, :]
    row_max = np.max(scored, axis=1)
    finite = row_max > -np.inf
    with np.errstate(invalid="ignore"):
        shifted = np.exp(scored - row_max[:, None])
    shifted[~finite, :] = 0.0
    row_sum = shifted.sum(axis=1)
    out = (shifted @ values) / np.where(row_sum > 0.0, row_sum, 1.0)
    out[~finite] = np.nan
    return out


_NUMPY_IMPLS = {
    "trunc_log_density_matrix": _trunc_log_density_matrix_numpy,
    "em_estep": _em_estep_numpy,
    "weighted_value_rows": _weighted_value_rows_numpy,
}


# ---------------------------------------------------------------------------
# numba implementations

_numba_cache = None


def numba_impls():
    """Compile (once) and return the numba kernel family."""
    global _numba_cache
    if _numba_cache is not None:
        return _numba_cache
    from numba import njit

    nb_log_ndtr = njit(cache=True)(log_ndtr)

    @njit(cache=True)
    def trunc_log_density_matrix(pts, means, covs):
        n = pts.shape[0]
        k = means.shape[0]
        out = np.empty((n, k))
        log_norm = np.empty(k)
        inv_a = np.empty(k)
        inv_b = np.empty(k)
        inv_c = np.empty(k)
        for j in range(k):
            a = covs[j, 0, 0]
            b = covs[j, 0, 1]
            c = covs[j, 1, 1]
            det = a * c - b * b
            log_acc = nb_log_ndtr(means[j, 1] / math.sqrt(c))
            log_norm[j] = -_LOG_2PI - 0.5 * math.log(det) - log_acc
            inv_a[j] = c / det
            inv_b[j] = b / det
            inv_c[j] = a / det
        for i in range(n):
            if pts[i, 1] < 0.0:
                for j in range(k):
                    out[i, j] = -np.inf
                continue
            for j in range(k):
                dy = pts[i, 0] - means[j, 0]
                dz = pts[i, 1] - means[j, 1]
                quad = dy * dy * inv_a[j] - 2.0 * dy * dz * inv_b[j] + dz * dz * inv_c[j]
                out[i, j] = log_norm[j] - 0.5 * quad
        return out

    @njit(cache=True)
    def em_estep(log_dens, log_weights):
        n, k = log_dens.shape
        colsums = np.zeros(k)
        row = np.empty(k)
        loglik = 0.0
        for i in range(n):
            m = -np.inf
            for j in range(k):
                row[j] = log_dens[i, j] + log_weights[j]
                if row[j] > m:
                    m = row[j]
            if m == -np.inf:
                loglik = -np.inf
                continue
            s = 0.0
            for j in range(k):
                row[j] = math.exp(row[j] - m)
                s += row[j]
            loglik += math.log(s) + m
            for j in range(k):
                colsums[j] += row[j] / s
        return loglik, colsums

    @njit(cache=True)
    def weighted_value_rows(log_dens, log_weights, values):
        n, k = log_dens.shape
        out = np.empty(n)
        row = np.empty(k)
        for i in range(n):
            m = -np.inf
            for j in range(k):
                row[j] = log_dens[i, j] + log_weights[j]
                if row[j] > m:
                    m = row[j]
            if m == -np.inf:
                out[i] = np.nan
                continue
            s = 0.0
            acc = 0.0
            for j in range(k):
                e = math.exp(row[j] - m)
                s += e
                acc += e * values[j]
            out[i] = acc / s
        return out

    _numba_cache = {
        "trunc_log_density_matrix": trunc_log_density_matrix,
        "em_estep": em_estep,
        "weighted_value_rows": weighted_value_rows,
    }
    return _numba_cache


def numpy_impls():
    return dict(_NUMPY_IMPLS)


if BACKEND == "numba":
    _active = numba_impls()
else:
    _active = _NUMPY_IMPLS

trunc_log_density_matrix = _active["trunc_log_density_matrix"]
em_estep = _active["em_estep"]
weighted_value_rows = _active["weighted_value_rows"]
