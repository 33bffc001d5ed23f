"""Linear time-varying diffusions, state transitions and controllability Gramians.

The controlled diffusion is

    dx = (A(t) x + B(t) u) dt + sqrt(2 eps) B(t) dw,   t in [0, 1],

and everything downstream (kernels, separations, contraction bounds) is a
function of the state-transition matrix ``Phi(t1, t0)`` and the Gramian
``M(t1, t0) = int_{t0}^{t1} Phi(t1, s) B(s) B(s)^T Phi(t1, s)^T ds``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .errors import DomainError, IntegrationError, UncontrollableError

DEFAULT_STEPS = 1000
SPD_RTOL = 1e-10

MatrixFn = Callable[[float], np.ndarray]


def _const(mat):
    mat = np.array(mat, dtype=float)
    mat.setflags(write=False)
    return lambda t: mat


@dataclass(frozen=True)
class LinearSystem:
    """Coefficients ``(A(t), B(t), eps)`` of the controlled linear diffusion.

    ``A`` and ``B`` are callables returning ``n x n`` and ``n x m`` arrays.
    Time-invariant systems (``time_invariant=True``) use matrix exponentials
    instead of RK4 for the state transition.
    """

    n: int
    m: int
    A: MatrixFn
    B: MatrixFn
    epsilon: float
    name: str = "custom"
    time_invariant: bool = False
    drift_free: bool = field(default=False, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise DomainError(f"dimensions must be positive, got n={self.n}, m={self.m}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise DomainError(f"epsilon must be positive and finite, got {self.epsilon}")
        a0 = np.asarray(self.A(0.0))
        b0 = np.asarray(self.B(0.0))
        if a0.shape != (self.n, self.n):
            raise ValueError(f"A(t) has shape {a0.shape}, expected {(self.n, self.n)}")
        if b0.shape != (self.n, self.m):
            raise ValueError(f"B(t) has shape {b0.shape}, expected {(self.n, self.m)}")

    @classmethod
    def constant(cls, A, B, epsilon, name="constant"):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("A and B must be finite")
        return cls(
            n=A.shape[0],
            m=B.shape[1],
            A=_const(A),
            B=_const(B),
            epsilon=float(epsilon),
            name=name,
            time_invariant=True,
            drift_free=not np.any(A),
        )

    @classmethod
    def classical(cls, n, epsilon):
        """Scaled Brownian motion: ``A = 0``, ``B = I``."""
        return cls.constant(np.zeros((n, n)), np.eye(n), epsilon, name="brownian")

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=float(epsilon))


# -- registry of built-in systems -------------------------------------------


def _double_integrator(epsilon, n=None):
    return LinearSystem.constant([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], epsilon, "double_integrator")


def _triple_integrator(epsilon, n=None):
    A = np.diag([1.0, 1.0], k=1)
    return LinearSystem.constant(A, [[0.0], [0.0], [1.0]], epsilon, "triple_integrator")


def _brownian(epsilon, n=None):
    return LinearSystem.classical(2 if n is None else int(n), epsilon)


def _oscillator(epsilon, n=None):
    return LinearSystem.constant([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]], epsilon, "oscillator")


def _damped_ltv(epsilon, n=None):
    def A(t):
        return np.array([[0.0, 1.0], [-(1.0 + t), -0.5]])

    def B(t):
        return np.array([[0.0], [1.0 + 0.5 * t]])

    return LinearSystem(2, 1, A, B, float(epsilon), name="damped_ltv")


def _ltv_oscillator(epsilon, n=None):
    def A(t):
        w2 = 1.0 + 0.5 * np.sin(2.0 * np.pi * t)
        return np.array([[0.0, 1.0], [-w2, 0.0]])

    def B(t):
        return np.array([[0.0], [1.0]])

    return LinearSystem(2, 1, A, B, float(epsilon), name="ltv_oscillator")


def _rotating_ltv(epsilon, n=None):
    def A(t):
        c = np.cos(np.pi * t)
        return np.array([[0.0, c, 0.0], [-c, 0.0, 1.0], [0.0, 0.0, -0.3]])

    def B(t):
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.2 * t, 1.0]])

    return LinearSystem(3, 2, A, B, float(epsilon), name="rotating_ltv")


REGISTRY = {
    "double_integrator": _double_integrator,
    "triple_integrator": _triple_integrator,
    "brownian": _brownian,
    "oscillator": _oscillator,
    "damped_ltv": _damped_ltv,
    "ltv_oscillator": _ltv_oscillator,
    "rotating_ltv": _rotating_ltv,
}


def make_system(name, epsilon, n=None):
    """Instantiate a registry system by name."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(epsilon, n)


# -- state transition ---------------------------------------------------------


def _check_interval(t0, t1, strict=False):
    if not (0.0 <= t0 <= t1 <= 1.0):
        raise DomainError(f"need 0 <= t0 <= t1 <= 1, got t0={t0}, t1={t1}")
    if strict and not t0 < t1:
        raise DomainError(f"need t0 < t1, got t0={t0}, t1={t1}")


def _rk4_forward(system, t0, t1, steps):
    h = (t1 - t0) / steps
    Phi = np.eye(system.n)
    for k in range(steps):
        t = t0 + k * h
        k1 = system.A(t) @ Phi
        k2 = system.A(t + 0.5 * h) @ (Phi + 0.5 * h * k1)
        k3 = system.A(t + 0.5 * h) @ (Phi + 0.5 * h * k2)
        k4 = system.A(t + h) @ (Phi + h * k3)
        Phi = Phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(Phi)):
            raise IntegrationError(f"state transition became non-finite at t={t + h:.6g}")
    return Phi


def state_transition(system, t0, t1, steps=DEFAULT_STEPS):
    """Return ``Phi(t1, t0)``, the solution of ``dPhi/dt = A(t) Phi``, ``Phi(t0, t0) = I``."""
    _check_interval(t0, t1)
    if t0 == t1:
        return np.eye(system.n)
    if system.time_invariant:
        Phi = expm(system.A(t0) * (t1 - t0))
        if not np.all(np.isfinite(Phi)):
            raise IntegrationError("matrix exponential is not finite")
        return Phi
    return _rk4_forward(system, t0, t1, steps)


def transition_to_end(system, t0, t1, steps=DEFAULT_STEPS):
    """Grid ``tau_k`` on ``[t0, t1]`` and the stack ``Phi(t1, tau_k)``.

    For time-varying systems the backward equation ``d/dtau Phi(t1, tau) =
    -Phi(t1, tau) A(tau)`` is integrated with RK4 from ``tau = t1``.
    """
    taus = np.linspace(t0, t1, steps + 1)
    n = system.n
    if system.drift_free:
        return taus, np.broadcast_to(np.eye(n), (steps + 1, n, n))
    if system.time_invariant:
        A = system.A(t0)
        return taus, expm((t1 - taus)[:, None, None] * A[None])
    h = (t1 - t0) / steps
    out = np.empty((steps + 1, n, n))
    G = np.eye(n)
    out[steps] = G
    for k in range(steps, 0, -1):
        tau = taus[k]
        k1 = G @ system.A(tau)
        k2 = (G - 0.5 * h * k1) @ system.A(tau - 0.5 * h)
        k3 = (G - 0.5 * h * k2) @ system.A(tau - 0.5 * h)
        k4 = (G - h * k3) @ system.A(tau - h)
        G = G - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(G)):
            raise IntegrationError(f"state transition became non-finite at tau={tau - h:.6g}")
        out[k - 1] = G
    return taus, out


# -- Gramian -----------------------------------------------------------------


@dataclass(frozen=True)
class GramianBundle:
    """``Phi(t1, t0)`` and the Gramian ``M`` with its derived SPD quantities."""

    t0: float
    t1: float
    Phi: np.ndarray
    M: np.ndarray
    M_inv: np.ndarray
    M_sqrt: np.ndarray
    M_inv_sqrt: np.ndarray
    eigvals: np.ndarray
    log_det_M: float

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def lambda_min(self):
        return float(self.eigvals[0])

    @property
    def lambda_max(self):
        return float(self.eigvals[-1])

    @classmethod
    def from_matrices(cls, Phi, M, t0=0.0, t1=1.0, rtol=SPD_RTOL):
        """Validate ``M`` as SPD and precompute inverse, square roots and log-det.

        Raises
        ------
        UncontrollableError
            If ``lambda_min(M) <= rtol * lambda_max(M)``.
        """
        Phi = np.array(Phi, dtype=float)
        M = np.array(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or Phi.shape != M.shape:
            raise ValueError(f"Phi {Phi.shape} and M {M.shape} must be square of equal size")
        asym = np.max(np.abs(M - M.T))
        scale = max(np.max(np.abs(M)), np.finfo(float).tiny)
        if asym > 1e-8 * scale:
            raise UncontrollableError(f"Gramian is not symmetric (residual {asym:.3g})")
        M = 0.5 * (M + M.T)
        w, V = np.linalg.eigh(M)
        if not np.all(np.isfinite(w)) or w[-1] <= 0 or w[0] <= rtol * w[-1]:
            raise UncontrollableError(
                "controllability Gramian on "
                f"[{t0:.6g}, {t1:.6g}] is not positive definite "
                f"(eigenvalues {w[0]:.3g} .. {w[-1]:.3g}); (A(t), B(t)) must be a "
                "controllable pair on this interval"
            )
        w = np.maximum(w, rtol * w[-1])
        sq = np.sqrt(w)
        M_sqrt = (V * sq) @ V.T
        M_inv_sqrt = (V / sq) @ V.T
        M_inv = (V / w) @ V.T
        return cls(
            t0=float(t0),
            t1=float(t1),
            Phi=Phi,
            M=M,
            M_inv=0.5 * (M_inv + M_inv.T),
            M_sqrt=0.5 * (M_sqrt + M_sqrt.T),
            M_inv_sqrt=0.5 * (M_inv_sqrt + M_inv_sqrt.T),
            eigvals=w,
            log_det_M=float(np.sum(np.log(w))),
        )

    @classmethod
    def identity(cls, n):
        """Bundle of the classical problem on ``[0, 1]``: ``Phi = M = I``."""
        return cls.from_matrices(np.eye(n), np.eye(n))

    @property
    def transform0(self):
        """Linear map ``M^{-1/2} Phi`` applied to the source support."""
        return self.M_inv_sqrt @ self.Phi

    @property
    def transform1(self):
        """Linear map ``M^{-1/2}`` applied to the target support."""
        return self.M_inv_sqrt


def controllability_gramian(system, t0=0.0, t1=1.0, steps=DEFAULT_STEPS):
    """Gramian bundle of ``system`` over ``[t0, t1]``.

    The integrand ``Phi(t1, s) B(s) B(s)^T Phi(t1, s)^T`` is integrated with
    composite Simpson on ``steps`` uniform intervals.  Drift-free
    time-invariant systems use the closed form ``(t1 - t0) B B^T``.
    """
    _check_interval(t0, t1, strict=True)
    if steps < 2:
        raise DomainError(f"steps must be >= 2, got {steps}")
    if system.drift_free:
        B = system.B(t0)
        return GramianBundle.from_matrices(np.eye(system.n), (t1 - t0) * (B @ B.T), t0, t1)
    taus, Psi = transition_to_end(system, t0, t1, steps)
    Bs = np.stack([system.B(t) for t in taus])
    if not np.all(np.isfinite(Bs)):
        raise IntegrationError("B(t) is not finite on the integration grid")
    F = Psi @ Bs
    integrand = F @ np.swapaxes(F, 1, 2)
    M = simpson(integrand, x=taus, axis=0)
    return GramianBundle.from_matrices(Psi[0], M, t0, t1)


def min_energy_transfer_cost(bundle, x0, x1):
    """Minimum control energy ``int ||u||^2`` steering ``x0`` to ``x1`` deterministically.

    Equals ``(Phi x0 - x1)^T M^{-1} (Phi x0 - x1)``.  Rows of ``x0``/``x1`` are
    broadcast, so stacks of endpoint pairs are accepted.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.shape[-1] != bundle.n or x1.shape[-1] != bundle.n:
        raise ValueError(
            f"endpoint dimension mismatch: bundle is {bundle.n}-dimensional, "
            f"got {x0.shape} and {x1.shape}"
        )
    r = x0 @ bundle.Phi.T - x1
    z = r @ bundle.M_inv_sqrt
    return np.sum(z * z, axis=-1)
