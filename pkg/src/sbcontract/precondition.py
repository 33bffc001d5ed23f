"""Preconditioning of the endpoint supports by Gramian maps and mean translation.

Both supports are first mapped to the coordinates in which the transfer cost
is a plain squared distance (``M^{-1/2} Phi`` for the source, ``M^{-1/2}``
for the target).  When the pushed-forward measures share one diagonal
covariance matrix, the remaining step is a translation of each mean to the
origin; the coefficient is then recomputed on the translated sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .contraction import ContractionReport, report_from_pair, witness_preimages
from .geometry import Ball, Ellipsoid, affine_image, separations, set_center
from .errors import DomainError


@dataclass(frozen=True)
class AffineMap:
    """``x -> matrix @ x + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        return np.asarray(x) @ self.matrix.T + self.offset

    def apply_to(self, set_):
        return affine_image(set_, self.matrix, self.offset)


@dataclass(frozen=True)
class PreconditionRecord:
    map0: AffineMap
    map1: AffineMap
    set0_out: object
    set1_out: object
    gamma_before: ContractionReport
    gamma_after: Optional[ContractionReport]
    applicable: bool
    reason: str = ""


def uniform_covariance(set_):
    """Covariance of the uniform distribution on an ellipsoid or ball."""
    n = set_.dim
    if isinstance(set_, Ellipsoid):
        return set_.shape / (n + 2)
    if isinstance(set_, Ball):
        return set_.radius**2 / (n + 2) * np.eye(n)
    raise TypeError(f"no closed-form uniform covariance for {type(set_).__name__}")


def pushforward_moments(matrix, mean, cov):
    """Mean and covariance of a measure after the linear map ``matrix``."""
    T = np.asarray(matrix, dtype=float)
    return T @ np.asarray(mean, dtype=float), T @ np.asarray(cov, dtype=float) @ T.T


def covariances_applicable(cov0, cov1, rtol=1e-8):
    """``True`` when the two covariances are equal and diagonal (to ``rtol``)."""
    cov0 = np.asarray(cov0, dtype=float)
    cov1 = np.asarray(cov1, dtype=float)
    scale = max(np.max(np.abs(cov0)), np.max(np.abs(cov1)))
    off0 = cov0 - np.diag(np.diag(cov0))
    off1 = cov1 - np.diag(np.diag(cov1))
    return bool(
        np.max(np.abs(cov0 - cov1)) <= rtol * scale
        and np.max(np.abs(off0)) <= rtol * scale
        and np.max(np.abs(off1)) <= rtol * scale
    )


def precondition_supports(
    bundle,
    epsilon,
    set0,
    set1,
    mean0=None,
    mean1=None,
    cov0=None,
    cov1=None,
    separation_power=2,
    rtol=1e-8,
):
    """Apply the Gramian maps, then translate the transformed means to the origin.

    ``mean0``/``mean1`` and ``cov0``/``cov1`` are moments of the *transformed*
    measures.  Means default to the transformed set centers for ellipsoids and
    balls.  If the covariances are missing, unequal or non-diagonal the record
    comes back with ``applicable=False`` and no ``gamma_after``.
    """
    T0, T1 = bundle.transform0, bundle.transform1
    img0, img1 = affine_image(set0, T0), affine_image(set1, T1)
    pair = separations(img0, img1)
    before = report_from_pair(
        pair, epsilon, separation_power, "linear", bundle, witness_preimages(bundle, pair)
    )

    m0 = set_center(img0) if mean0 is None else np.asarray(mean0, dtype=float)
    m1 = set_center(img1) if mean1 is None else np.asarray(mean1, dtype=float)
    if m0 is None or m1 is None:
        raise DomainError("means are required for supports without a center of symmetry")
    map0 = AffineMap(T0, -m0)
    map1 = AffineMap(T1, -m1)
    out0 = affine_image(img0, np.eye(img0.dim), -m0)
    out1 = affine_image(img1, np.eye(img1.dim), -m1)

    if cov0 is None or cov1 is None:
        return PreconditionRecord(map0, map1, out0, out1, before, None, False, "covariances not supplied")
    if not covariances_applicable(cov0, cov1, rtol):
        return PreconditionRecord(
            map0, map1, out0, out1, before, None, False, "covariances are not identical and diagonal"
        )
    pair_after = separations(out0, out1)
    after = report_from_pair(pair_after, epsilon, separation_power, "linear-preconditioned")
    return PreconditionRecord(map0, map1, out0, out1, before, after, True)


@dataclass(frozen=True)
class GammaComparison:
    gamma_before: float
    gamma_after: float
    improvement_factor: float
    improved: bool


def compare_gamma(record):
    """Before/after coefficients and their ratio (no optimality implied)."""
    if not record.applicable or record.gamma_after is None:
        raise DomainError(f"preconditioning not applicable: {record.reason}")
    b, a = record.gamma_before.gamma, record.gamma_after.gamma
    if a > 0:
        factor = b / a
    else:
        factor = 1.0 if b == 0 else np.inf
    return GammaComparison(b, a, float(factor), a < b)
