"""Worst-case contraction coefficients of the Schrodinger fixed-point recursion.

For supports ``X0, X1`` and noise level ``eps`` the coefficient of one full
pass is

    gamma = tanh^2( log(beta / alpha) / 2 ) = tanh^2( (alpha_tilde - beta_tilde) / (8 eps) ),

where ``alpha_tilde``/``beta_tilde`` are the extremal minimum-energy transfer
costs between the supports (squared separations of the Gramian-transformed
sets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import DEFAULT_STEPS, GramianBundle, controllability_gramian
from .errors import DomainError
from .geometry import linear_separations, separations
from .kernels import kernel_bounds

GAMMA_CAP = 1.0 - 1e-16


def gamma_from_separations(alpha_tilde, beta_tilde, epsilon):
    """``tanh^2((alpha_tilde - beta_tilde) / (8 eps))``."""
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if not (0.0 <= beta_tilde <= alpha_tilde < np.inf):
        raise DomainError(f"need 0 <= beta_tilde <= alpha_tilde, got {beta_tilde}, {alpha_tilde}")
    return float(np.tanh((alpha_tilde - beta_tilde) / (8.0 * epsilon)) ** 2)


def gamma_from_kernel_bounds(bounds):
    """``tanh^2(log(beta / alpha) / 2)`` from :class:`~sbcontract.kernels.KernelBounds`."""
    log_ratio = bounds.log_beta - bounds.log_alpha
    if log_ratio < 0:
        raise DomainError("kernel bounds must satisfy alpha <= beta")
    return float(np.tanh(0.5 * log_ratio) ** 2)


def quadratic_form_bounds(bundle, x0, x1):
    """Eigenvalue sandwich ``(lo, value, hi)`` of the transfer cost at ``(x0, x1)``.

    ``lo = |Phi x0 - x1|^2 / lambda_max(M)``, ``hi = |Phi x0 - x1|^2 / lambda_min(M)``
    and ``value = (Phi x0 - x1)^T M^{-1} (Phi x0 - x1)``.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    r = x0 @ bundle.Phi.T - x1
    r2 = np.sum(r * r, axis=-1)
    z = r @ bundle.M_inv_sqrt
    value = np.sum(z * z, axis=-1)
    return r2 / bundle.lambda_max, value, r2 / bundle.lambda_min


@dataclass(frozen=True)
class ContractionReport:
    """A worst-case contraction coefficient together with its provenance.

    ``alpha_tilde``/``beta_tilde`` are the separations actually fed into the
    formula, i.e. squared when ``separation_power == 2`` and unsquared when
    ``separation_power == 1``.  ``sandwich_lo``/``sandwich_hi`` hold the
    eigenvalue bounds of the transfer cost evaluated at the maximising and
    minimising witness pairs, in that order.
    """

    gamma: float
    alpha_tilde: float
    beta_tilde: float
    separation_power: int
    epsilon: float
    kernel_kind: str
    bounds_route: str
    sandwich_lo: tuple = (np.nan, np.nan)
    sandwich_hi: tuple = (np.nan, np.nan)
    certified: bool = True
    squared: tuple = field(default=(np.nan, np.nan))
    witnesses: Optional[dict] = None

    @property
    def gamma_raw(self):
        return gamma_from_separations(self.alpha_tilde, self.beta_tilde, self.epsilon)

    def as_dict(self):
        return {
            "gamma": self.gamma,
            "alpha_tilde": self.alpha_tilde,
            "beta_tilde": self.beta_tilde,
            "alpha_tilde_squared": self.squared[0],
            "beta_tilde_squared": self.squared[1],
            "separation_power": self.separation_power,
            "epsilon": self.epsilon,
            "kernel_kind": self.kernel_kind,
            "bounds_route": self.bounds_route,
            "sandwich_lo": list(self.sandwich_lo),
            "sandwich_hi": list(self.sandwich_hi),
            "certified": self.certified,
        }


def report_from_pair(pair, epsilon, separation_power=2, kernel_kind="linear", bundle=None, preimages=None):
    """Build a :class:`ContractionReport` from a separation pair.

    ``preimages`` maps the transformed witnesses back to the original
    coordinates (needed for the eigenvalue sandwich).
    """
    a, b = pair.powered(separation_power)
    gamma = min(gamma_from_separations(a, b, epsilon), GAMMA_CAP)
    lo = hi = (np.nan, np.nan)
    witnesses = None
    if bundle is not None and preimages is not None:
        (x0a, x1a), (x0b, x1b) = preimages
        lo_a, _, hi_a = quadratic_form_bounds(bundle, x0a, x1a)
        lo_b, _, hi_b = quadratic_form_bounds(bundle, x0b, x1b)
        lo, hi = (float(lo_a), float(lo_b)), (float(hi_a), float(hi_b))
        witnesses = {"max": (x0a, x1a), "min": (x0b, x1b)}
    return ContractionReport(
        gamma=gamma,
        alpha_tilde=float(a),
        beta_tilde=float(b),
        separation_power=separation_power,
        epsilon=float(epsilon),
        kernel_kind=kernel_kind,
        bounds_route="separations",
        sandwich_lo=lo,
        sandwich_hi=hi,
        certified=pair.certified,
        squared=(pair.alpha_tilde, pair.beta_tilde),
        witnesses=witnesses,
    )


def witness_preimages(bundle, pair):
    """Map the transformed witness pairs back to the original coordinates."""
    T0_inv = np.linalg.inv(bundle.transform0)
    back0 = lambda z: T0_inv @ z
    back1 = lambda z: bundle.M_sqrt @ z
    (a0, a1), (b0, b1) = pair.witness_max, pair.witness_min
    return (back0(a0), back1(a1)), (back0(b0), back1(b1))


def gamma_classical(set0, set1, epsilon, separation_power=2):
    """Coefficient of the classical (heat kernel) bridge between two supports."""
    pair = separations(set0, set1)
    bundle = GramianBundle.identity(set0.dim)
    return report_from_pair(
        pair, epsilon, separation_power, "classical", bundle, (pair.witness_max, pair.witness_min)
    )


def gamma_linear(system, set0, set1, separation_power=2, steps=DEFAULT_STEPS, bundle=None):
    """Coefficient of the linear bridge from the problem data alone.

    Builds the Gramian on ``[0, 1]`` (unless ``bundle`` is given), maps the
    supports by ``M^{-1/2} Phi`` and ``M^{-1/2}`` and applies the tanh formula
    to their separations.
    """
    if bundle is None:
        bundle = controllability_gramian(system, 0.0, 1.0, steps)
    pair = linear_separations(bundle, set0, set1)
    return report_from_pair(
        pair, system.epsilon, separation_power, "linear", bundle, witness_preimages(bundle, pair)
    )


def gamma_via_kernel_bounds(system, set0, set1, steps=DEFAULT_STEPS, bundle=None):
    """Same coefficient through the kernel-ratio route (always squared separations)."""
    if bundle is None:
        bundle = controllability_gramian(system, 0.0, 1.0, steps)
    kb = kernel_bounds(system.epsilon, set0, set1, bundle=bundle)
    gamma = min(gamma_from_kernel_bounds(kb), GAMMA_CAP)
    return ContractionReport(
        gamma=gamma,
        alpha_tilde=kb.alpha_tilde,
        beta_tilde=kb.beta_tilde,
        separation_power=2,
        epsilon=float(system.epsilon),
        kernel_kind="linear",
        bounds_route="kernel-ratio",
        squared=(kb.alpha_tilde, kb.beta_tilde),
    )
