"""Pure-numpy implementations of the hot kernels (fallback for ``_ext``)."""

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp


def lse_rows(logK, v):
    """``out[i] = log sum_j exp(logK[i, j] + v[j])``."""
    return logsumexp(logK + v[None, :], axis=1)


def sqdist_extrema(P, Q):
    """Largest and smallest squared distance over all pairs ``(P[i], Q[j])``.

    Returns ``(dmax, imax, jmax, dmin, imin, jmin)``; ties resolve to the first
    pair in row-major order.
    """
    D = cdist(P, Q, "sqeuclidean")
    kmax = int(np.argmax(D))
    kmin = int(np.argmin(D))
    imax, jmax = divmod(kmax, D.shape[1])
    imin, jmin = divmod(kmin, D.shape[1])
    return float(D.flat[kmax]), imax, jmax, float(D.flat[kmin]), imin, jmin


def mixture_stats(Z, C, logc):
    """Log-sum and posterior mean of an isotropic unit-variance Gaussian mixture.

    For each query row ``z`` the log-weights are ``logc[j] - |z - C[j]|^2 / 2``;
    returns their log-sum-exp and the weight-averaged center.
    """
    E = logc[None, :] - 0.5 * cdist(Z, C, "sqeuclidean")
    lse = logsumexp(E, axis=1)
    with np.errstate(invalid="ignore"):
        P = np.exp(E - lse[:, None])
    return lse, P @ C
