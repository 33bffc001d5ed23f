"""Support sets, support functions and squared separations between sets.

Four set variants are supported: :class:`Ellipsoid`, :class:`Ball`,
:class:`Polytope` (convex hull of its vertices) and :class:`PointCloud` (a
finite, possibly nonconvex set of points).  A ``PointCloud`` has the same
support function as its convex hull, so the maximal separation is unaffected,
but the minimal separation is taken over the points themselves.

Separations are squared Euclidean distances:

* ``alpha_tilde = max ||x0 - x1||^2`` over ``set0 x set1``
  (squared diameter of the Minkowski difference, measured from the origin),
* ``beta_tilde = min ||x0 - x1||^2`` (zero iff the sets intersect).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import Delaunay

from . import _backend
from .errors import DomainError, GJKConvergenceError

SCAN_ANGLES = 4096
ASCENT_SEEDS = 64
GJK_TOL = 1e-12


def _vec(x, name="vector"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be a finite 1-d array, got {x!r}")
    return x


def _points(P, name):
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P.reshape(1, -1)
    if P.ndim != 2 or P.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty (k, n) array")
    if not np.all(np.isfinite(P)):
        raise ValueError(f"{name} must be finite")
    return P


class ConvexSupport:
    """Common interface of the compact support variants."""

    dim: int
    discrete = False

    def support(self, y):
        """Support function ``h(y) = sup_{x in set} <y, x>`` (rows of ``y`` vectorised)."""
        raise NotImplementedError

    def support_point(self, y):
        """A maximiser of ``<y, x>`` over the set."""
        raise NotImplementedError

    def contains(self, X, tol=1e-12):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def _check_dir(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ValueError(f"direction has dimension {y.shape[-1]}, set is {self.dim}-dimensional")
        return y


@dataclass(frozen=True, eq=False)
class Ellipsoid(ConvexSupport):
    """``{x : (x - c)^T S^{-1} (x - c) <= 1}`` with SPD shape matrix ``S``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = _vec(self.center, "center")
        S = np.asarray(self.shape, dtype=float)
        if S.shape != (c.size, c.size):
            raise ValueError(f"shape matrix must be {c.size}x{c.size}, got {S.shape}")
        if not np.all(np.isfinite(S)) or np.max(np.abs(S - S.T)) > 1e-9 * max(1.0, np.max(np.abs(S))):
            raise ValueError("shape matrix must be finite and symmetric")
        S = 0.5 * (S + S.T)
        w = np.linalg.eigvalsh(S)
        if w[0] <= 0:
            raise ValueError(f"shape matrix must be positive definite (min eigenvalue {w[0]:.3g})")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", S)

    @property
    def dim(self):
        return self.center.size

    def support(self, y):
        y = self._check_dir(y)
        q = np.einsum("...i,ij,...j->...", y, self.shape, y)
        return y @ self.center + np.sqrt(np.maximum(q, 0.0))

    def support_point(self, y):
        y = self._check_dir(y)
        Sy = self.shape @ y
        q = float(y @ Sy)
        if q <= 0.0:
            return self.center.copy()
        return self.center + Sy / np.sqrt(q)

    def contains(self, X, tol=1e-12):
        D = np.atleast_2d(X) - self.center
        return np.einsum("ki,ki->k", D, np.linalg.solve(self.shape, D.T).T) <= 1.0 + tol

    def bounding_box(self):
        r = np.sqrt(np.diag(self.shape))
        return self.center - r, self.center + r


@dataclass(frozen=True, eq=False)
class Ball(ConvexSupport):
    """Euclidean ball ``{x : ||x - c|| <= r}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = _vec(self.center, "center")
        r = float(self.radius)
        if not (np.isfinite(r) and r > 0):
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self):
        return self.center.size

    def support(self, y):
        y = self._check_dir(y)
        return y @ self.center + self.radius * np.linalg.norm(y, axis=-1)

    def support_point(self, y):
        y = self._check_dir(y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return self.center.copy()
        return self.center + self.radius * y / ny

    def contains(self, X, tol=1e-12):
        D = np.atleast_2d(X) - self.center
        return np.sum(D * D, axis=1) <= self.radius**2 * (1.0 + tol)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


@dataclass(frozen=True, eq=False)
class _Vertices(ConvexSupport):
    points: np.ndarray
    discrete = True

    def __post_init__(self):
        object.__setattr__(self, "points", _points(self.points, "points"))

    @property
    def dim(self):
        return self.points.shape[1]

    def support(self, y):
        y = self._check_dir(y)
        return np.max(y @ self.points.T, axis=-1)

    def support_point(self, y):
        y = self._check_dir(y)
        return self.points[int(np.argmax(self.points @ y))].copy()

    def bounding_box(self):
        return self.points.min(axis=0), self.points.max(axis=0)


class Polytope(_Vertices):
    """Convex hull of a finite vertex list."""

    @property
    def vertices(self):
        return self.points

    def contains(self, X, tol=1e-12):
        X = np.atleast_2d(X)
        P = self.points
        if P.shape[0] == 1:
            return np.all(np.abs(X - P[0]) <= tol, axis=1)
        if self.dim == 1:
            lo, hi = P.min(), P.max()
            return (X[:, 0] >= lo - tol) & (X[:, 0] <= hi + tol)
        try:
            tri = Delaunay(P)
        except Exception:  # flat hull: no interior in R^n
            return np.zeros(X.shape[0], dtype=bool)
        return tri.find_simplex(X, tol=tol) >= 0


class PointCloud(_Vertices):
    """Finite point set; its support function is that of its convex hull."""

    def contains(self, X, tol=1e-12):
        X = np.atleast_2d(X)
        d = np.min(np.sum((X[:, None, :] - self.points[None]) ** 2, axis=2), axis=1)
        return d <= tol * tol


def support_function(set_, y):
    """Evaluate ``h_set(y) = sup_{x in set} <y, x>``."""
    return set_.support(y)


def affine_image(set_, T, tau=None):
    """Representation of ``T set + tau``.

    The support function transforms as ``h_out(y) = h_in(T^T y) + <tau, y>``.
    Ellipsoids and balls need an invertible ``T``; for singular maps sample
    the set into a :class:`PointCloud` first.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    n = set_.dim
    if T.shape != (n, n):
        raise ValueError(f"T must be {n}x{n}, got {T.shape}")
    tau = np.zeros(n) if tau is None else _vec(tau, "tau")
    if tau.size != n:
        raise ValueError(f"tau has dimension {tau.size}, expected {n}")
    if isinstance(set_, _Vertices):
        return type(set_)(set_.points @ T.T + tau)
    if abs(np.linalg.det(T)) <= 1e-14 * max(1.0, np.max(np.abs(T))) ** n:
        raise DomainError(
            "singular T maps the ellipsoid to a degenerate set; sample it into a "
            "PointCloud before applying the map"
        )
    center = T @ set_.center + tau
    if isinstance(set_, Ball):
        G = T @ T.T
        s2 = np.trace(G) / n
        if np.allclose(G, s2 * np.eye(n), rtol=0.0, atol=1e-14 * s2):
            return Ball(center, set_.radius * np.sqrt(s2))
        return Ellipsoid(center, set_.radius**2 * G)
    return Ellipsoid(center, T @ set_.shape @ T.T)


def translate(set_, tau):
    return affine_image(set_, np.eye(set_.dim), tau)


def set_center(set_):
    """Center of symmetry for ellipsoids and balls, ``None`` otherwise."""
    if isinstance(set_, (Ellipsoid, Ball)):
        return set_.center.copy()
    return None


# -- separations --------------------------------------------------------------


@dataclass(frozen=True)
class Extremum:
    """An extremal squared separation with the point pair that attains it.

    ``direction`` is the unit vector ``y`` at which the support-function form
    ``h0(y) + h1(-y)`` attains the extremum (``None`` when the sets overlap
    and no such direction exists).  ``certified`` is ``False`` when the value
    is a best-found local result rather than a guaranteed global one.
    """

    value: float
    witness: tuple
    direction: Optional[np.ndarray]
    certified: bool = True

    @property
    def distance(self):
        return float(np.sqrt(self.value))


def _check_pair(set0, set1):
    if set0.dim != set1.dim:
        raise ValueError(f"sets live in different dimensions: {set0.dim} vs {set1.dim}")


def _unit(v):
    nv = np.linalg.norm(v)
    return v / nv if nv > 0 else None


def _pair_extremum(x0, x1, certified=True, sign=1.0):
    d = x0 - x1
    value = float(np.sum(d * d))
    direction = _unit(sign * d)
    return Extremum(value, (x0, x1), direction, certified)


def _diff_support(set0, set1, Y):
    return set0.support(Y) + set1.support(-Y)


def _scan_max_2d(set0, set1):
    theta = np.linspace(0.0, 2.0 * np.pi, SCAN_ANGLES, endpoint=False)
    Y = np.column_stack([np.cos(theta), np.sin(theta)])
    f = _diff_support(set0, set1, Y)
    k = int(np.argmax(f))
    step = theta[1] - theta[0]

    def negf(th):
        y = np.array([np.cos(th), np.sin(th)])
        return -float(_diff_support(set0, set1, y))

    best = theta[k]
    try:
        res = minimize_scalar(negf, bracket=(best - step, best, best + step), method="golden", tol=1e-12)
        if -res.fun >= f[k]:
            best = res.x
    except ValueError:  # flat bracket: scan value is already optimal
        pass
    return np.array([np.cos(best), np.sin(best)])


def _ascent_max(set0, set1, seeds=ASCENT_SEEDS, iters=500):
    """Fixed-point ascent ``y <- d(y)/|d(y)|`` from several seeds.

    ``d(y)`` is the support point of the Minkowski difference in direction
    ``y``; each step does not decrease ``h(y)``.
    """
    rng = np.random.default_rng(0)
    Y0 = rng.standard_normal((seeds, set0.dim))
    Y0 /= np.linalg.norm(Y0, axis=1, keepdims=True)
    best_val, best_pair = -np.inf, None
    for y in Y0:
        for _ in range(iters):
            x0 = set0.support_point(y)
            x1 = set1.support_point(-y)
            d = x0 - x1
            nd = np.linalg.norm(d)
            if nd == 0.0:
                break
            y_new = d / nd
            if np.linalg.norm(y_new - y) < 1e-14:
                break
            y = y_new
        x0 = set0.support_point(y)
        x1 = set1.support_point(-y)
        val = float(np.sum((x0 - x1) ** 2))
        if val > best_val:
            best_val, best_pair = val, (x0, x1)
    return best_pair


def max_separation(set0, set1):
    """Maximal squared separation ``max ||x0 - x1||^2`` over ``set0 x set1``.

    Vertex sets are enumerated exactly.  Otherwise the support-function form
    ``max_y (h0(y) + h1(-y))`` is maximised over unit ``y``: a 4096-angle scan
    with golden-section refinement in 2-d, and multi-start fixed-point ascent
    (64 seeds, not certified) for ``n >= 3``.
    """
    _check_pair(set0, set1)
    n = set0.dim
    if set0.discrete and set1.discrete:
        dmax, i, j, *_ = _backend.sqdist_extrema(set0.points, set1.points)
        return _pair_extremum(set0.points[i].copy(), set1.points[j].copy())
    if n == 1:
        cands = []
        for s in (1.0, -1.0):
            y = np.array([s])
            cands.append((set0.support_point(y), set1.support_point(-y)))
        x0, x1 = max(cands, key=lambda p: float(np.sum((p[0] - p[1]) ** 2)))
        return _pair_extremum(x0, x1)
    if n == 2:
        y = _scan_max_2d(set0, set1)
        return _pair_extremum(set0.support_point(y), set1.support_point(-y))
    x0, x1 = _ascent_max(set0, set1)
    return _pair_extremum(x0, x1, certified=False)


# -- GJK ------------------------------------------------------------------------


def _closest_on_simplex(W):
    """Minimum-norm point of ``conv(W)`` by enumerating faces.

    Returns the barycentric coordinates and the indices of the face that
    carries the minimiser; among equal norms the smallest face wins.
    """
    k = W.shape[0]
    best = None
    for size in range(1, k + 1):
        for idx in itertools.combinations(range(k), size):
            V = W[list(idx)]
            if size == 1:
                lam = np.ones(1)
            else:
                E = (V[1:] - V[0]).T
                mu = np.linalg.lstsq(E, -V[0], rcond=None)[0]
                lam = np.concatenate([[1.0 - mu.sum()], mu])
                if np.any(lam < -1e-12):
                    continue
                lam = np.maximum(lam, 0.0)
                lam /= lam.sum()
            p = lam @ V
            nn = float(p @ p)
            if best is None or nn < best[0] * (1.0 - 1e-12) - 1e-300:
                best = (nn, idx, lam, p)
    return best


def gjk_distance(set0, set1, tol=GJK_TOL, max_iter=None):
    """Squared distance between two convex sets with the GJK iteration.

    Only support oracles are used.  Returns ``(dist2, a, b, overlap)`` where
    ``a`` in ``set0`` and ``b`` in ``set1`` are closest points (``a == b``
    when the sets intersect).
    """
    _check_pair(set0, set1)
    n = set0.dim
    max_iter = 10 * n * 64 if max_iter is None else max_iter

    def support(d):
        a = set0.support_point(d)
        b = set1.support_point(-d)
        return a - b, a, b

    w, a, b = support(np.eye(n)[0])
    W, Aa, Bb = w[None], a[None], b[None]
    lam = np.ones(1)
    v = w.copy()
    for _ in range(max_iter):
        vv = float(v @ v)
        if vv <= tol:
            p = lam @ Aa
            q = lam @ Bb
            mid = 0.5 * (p + q)
            return 0.0, mid, mid, True
        w, a, b = support(-v)
        gap = vv - float(v @ w)
        if gap <= 0.5 * tol or gap <= 1e-15 * vv:
            break
        if np.any(np.all(np.abs(W - w) <= 1e-15 * max(1.0, np.abs(w).max()), axis=1)):
            break
        Wn = np.vstack([W, w])
        nn, idx, lam_new, p = _closest_on_simplex(Wn)
        if nn >= vv * (1.0 - 1e-14):
            break  # roundoff stall; keep the previous simplex
        idx = list(idx)
        Aa = np.vstack([Aa, a])[idx]
        Bb = np.vstack([Bb, b])[idx]
        W, lam, v = Wn[idx], lam_new, p
    else:
        raise GJKConvergenceError(
            f"GJK did not converge in {max_iter} iterations", best_bound=float(v @ v)
        )
    a_star = lam @ Aa
    b_star = lam @ Bb
    d = a_star - b_star
    return float(d @ d), a_star, b_star, False


def _min_points_vs_set(cloud, other):
    best = None
    for p in cloud.points:
        dist2, a, b, overlap = gjk_distance(PointCloud(p), other)
        if best is None or dist2 < best[0]:
            best = (dist2, a, b, overlap)
    return best


def min_separation(set0, set1):
    """Minimal squared separation ``min ||x0 - x1||^2`` over ``set0 x set1``.

    Convex variants use GJK on the Minkowski difference with the support
    oracles; a point cloud is treated as its finite point set (exact pairwise
    enumeration, or one GJK query per point against a convex partner).
    """
    _check_pair(set0, set1)
    c0 = isinstance(set0, PointCloud)
    c1 = isinstance(set1, PointCloud)
    if c0 and c1:
        *_, dmin, i, j = _backend.sqdist_extrema(set0.points, set1.points)
        x0, x1 = set0.points[i].copy(), set1.points[j].copy()
        overlap = dmin == 0.0
    elif c0:
        dmin, x0, x1, overlap = _min_points_vs_set(set0, set1)
    elif c1:
        dmin, x1, x0, overlap = _min_points_vs_set(set1, set0)
    else:
        dmin, x0, x1, overlap = gjk_distance(set0, set1)
    if overlap:
        return Extremum(0.0, (x0, x1), None)
    # direction y minimising h0(y) + h1(-y) points from x0 towards x1
    return _pair_extremum(x0, x1, sign=-1.0)


@dataclass(frozen=True)
class SeparationPair:
    """Maximal and minimal squared separations between two (transformed) sets."""

    max: Extremum
    min: Extremum
    set0: ConvexSupport
    set1: ConvexSupport

    @property
    def alpha_tilde(self):
        return self.max.value

    @property
    def beta_tilde(self):
        return self.min.value

    @property
    def witness_max(self):
        return self.max.witness

    @property
    def witness_min(self):
        return self.min.witness

    @property
    def direction_max(self):
        return self.max.direction

    @property
    def direction_min(self):
        return self.min.direction

    @property
    def certified(self):
        return self.max.certified and self.min.certified

    def powered(self, power):
        """``(alpha_tilde, beta_tilde)`` squared (``power=2``) or unsquared (``power=1``)."""
        if power == 2:
            return self.alpha_tilde, self.beta_tilde
        if power == 1:
            return float(np.sqrt(self.alpha_tilde)), float(np.sqrt(self.beta_tilde))
        raise DomainError(f"separation power must be 1 or 2, got {power}")


def separations(set0, set1):
    """Both squared separations of two sets in the same coordinates."""
    return SeparationPair(max_separation(set0, set1), min_separation(set0, set1), set0, set1)


def linear_separations(bundle, set0, set1):
    """Separations of ``M^{-1/2} Phi set0`` and ``M^{-1/2} set1``.

    These equal the extrema over ``set0 x set1`` of the minimum-energy
    transfer cost ``(Phi x0 - x1)^T M^{-1} (Phi x0 - x1)``.
    """
    if set0.dim != bundle.n or set1.dim != bundle.n:
        raise ValueError(f"sets must be {bundle.n}-dimensional to match the Gramian")
    img0 = affine_image(set0, bundle.transform0)
    img1 = affine_image(set1, bundle.transform1)
    return separations(img0, img1)
