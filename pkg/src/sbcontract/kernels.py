"""Transition densities of the uncontrolled diffusion and their bounds on supports.

All kernels are evaluated as log-densities and exponentiated only at the
boundary, since values such as ``exp(-alpha_tilde / 4 eps)`` underflow quickly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dynamics import GramianBundle, controllability_gramian, DEFAULT_STEPS
from .errors import DomainError, SingularIntervalError, UncontrollableError
from .geometry import linear_separations, separations

LOG_4PI = np.log(4.0 * np.pi)


def _check_eps(epsilon):
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise DomainError(f"epsilon must be positive, got {epsilon}")


def log_brownian_kernel(epsilon, x0, x1):
    _check_eps(epsilon)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    n = np.broadcast_shapes(x0.shape, x1.shape)[-1]
    d = x0 - x1
    return -0.5 * n * (LOG_4PI + np.log(epsilon)) - np.sum(d * d, axis=-1) / (4.0 * epsilon)


def brownian_kernel(epsilon, x0, x1):
    """Heat kernel ``(4 pi eps)^{-n/2} exp(-|x0 - x1|^2 / (4 eps))`` on ``[0, 1]``."""
    return np.exp(log_brownian_kernel(epsilon, x0, x1))


def log_linear_kernel(bundle, epsilon, x0, x1, route="gaussian"):
    """Log transition density of the uncontrolled linear diffusion.

    ``route="gaussian"`` evaluates the Gaussian with mean ``Phi x0`` and
    covariance ``2 eps M`` directly; ``route="factored"`` rescales both
    endpoints by ``M^{-1/2}`` and evaluates the heat kernel there, times
    ``det(M)^{-1/2}``.  The two agree to rounding.
    """
    _check_eps(epsilon)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if route == "gaussian":
        r = x0 @ bundle.Phi.T - x1
        quad = np.einsum("...i,ij,...j->...", r, bundle.M_inv, r)
        return -quad / (4.0 * epsilon) - 0.5 * (bundle.n * (LOG_4PI + np.log(epsilon)) + bundle.log_det_M)
    if route == "factored":
        z0 = x0 @ bundle.transform0.T
        z1 = x1 @ bundle.transform1.T
        return -0.5 * bundle.log_det_M + log_brownian_kernel(epsilon, z0, z1)
    raise ValueError(f"unknown route {route!r}")


def linear_kernel(bundle, epsilon, x0, x1, route="gaussian"):
    return np.exp(log_linear_kernel(bundle, epsilon, x0, x1, route))


@dataclass(frozen=True)
class KernelBounds:
    """Extremal kernel values on ``set0 x set1``.

    ``alpha = normalizer * exp(-alpha_tilde / (4 eps))`` and
    ``beta = normalizer * exp(-beta_tilde / (4 eps))`` with
    ``normalizer = ((4 pi eps)^n det M)^{-1/2}``.
    """

    alpha_tilde: float
    beta_tilde: float
    epsilon: float
    log_normalizer: float

    @property
    def log_alpha(self):
        return self.log_normalizer - self.alpha_tilde / (4.0 * self.epsilon)

    @property
    def log_beta(self):
        return self.log_normalizer - self.beta_tilde / (4.0 * self.epsilon)

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha))

    @property
    def beta(self):
        return float(np.exp(self.log_beta))

    @property
    def log_ratio(self):
        """``log(beta / alpha)`` computed without forming either value."""
        return (self.alpha_tilde - self.beta_tilde) / (4.0 * self.epsilon)


def kernel_bounds(epsilon, set0, set1, bundle=None, pair=None):
    """Kernel bounds from the squared separations of the supports.

    With ``bundle=None`` the classical heat kernel is used; otherwise the
    separations of the Gramian-transformed sets.  A precomputed
    :class:`~sbcontract.geometry.SeparationPair` may be passed as ``pair``.
    """
    _check_eps(epsilon)
    n = set0.dim
    if pair is None:
        pair = separations(set0, set1) if bundle is None else linear_separations(bundle, set0, set1)
    log_det = 0.0 if bundle is None else bundle.log_det_M
    log_norm = -0.5 * (n * (LOG_4PI + np.log(epsilon)) + log_det)
    return KernelBounds(pair.alpha_tilde, pair.beta_tilde, float(epsilon), float(log_norm))


class TransitionKernel:
    """Transition density ``q(t0, x, t1, y)`` of a linear system over ``[t0, t1]``.

    In the rescaled coordinates ``a = M^{-1/2} Phi x / sqrt(2 eps)`` and
    ``b = M^{-1/2} y / sqrt(2 eps)`` the density is
    ``exp(log_norm - |a - b|^2 / 2)``.
    """

    def __init__(self, system, t0=0.0, t1=1.0, steps=DEFAULT_STEPS, bundle=None):
        self.system = system
        self.epsilon = system.epsilon
        self.t0, self.t1 = float(t0), float(t1)
        if bundle is None:
            if not t0 < t1:
                raise SingularIntervalError(
                    f"transition kernel over [{t0}, {t1}] is a point mass; use an interior time"
                )
            try:
                bundle = controllability_gramian(system, t0, t1, steps)
            except UncontrollableError as exc:
                raise SingularIntervalError(
                    f"sub-interval Gramian on [{t0:.6g}, {t1:.6g}] is singular; use an interior time"
                ) from exc
        self.bundle = bundle
        scale = 1.0 / np.sqrt(2.0 * self.epsilon)
        self.source_map = scale * bundle.transform0
        self.target_map = scale * bundle.transform1
        self.log_norm = -0.5 * (system.n * (LOG_4PI + np.log(self.epsilon)) + bundle.log_det_M)

    @classmethod
    def classical(cls, n, epsilon):
        from .dynamics import LinearSystem

        return cls(LinearSystem.classical(n, epsilon), bundle=GramianBundle.identity(n))

    def source_coords(self, X):
        return np.atleast_2d(X) @ self.source_map.T

    def target_coords(self, Y):
        return np.atleast_2d(Y) @ self.target_map.T

    def log_density(self, x, y):
        """Elementwise ``log q`` for broadcastable point arrays."""
        return log_linear_kernel(self.bundle, self.epsilon, x, y)

    def log_matrix(self, X, Y):
        """``log q(x_i, y_j)`` for all pairs."""
        A = self.source_coords(X)
        B = self.target_coords(Y)
        return self.log_norm - 0.5 * cdist(A, B, "sqeuclidean")
