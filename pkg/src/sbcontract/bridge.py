"""Discretised Schrodinger system, its fixed-point solver and the resulting bridge.

Endpoint densities are represented by weighted point sets
(:class:`DiscreteMeasure`).  The Schrodinger system

    rho0 = phi_hat0 * (K W1 phi1),      rho1 = phi1 * (K^T W0 phi_hat0)

is solved by alternating the two boundary conditions in log space.  One
*pass* applies both updates; convergence is monitored with the Hilbert
projective distance between successive ``phi1`` iterates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .dynamics import DEFAULT_STEPS
from .errors import DomainError, EvaluationError, SupportError
from .geometry import ConvexSupport, PointCloud
from .kernels import TransitionKernel

NOISE_FLOOR = 1e3 * np.finfo(float).eps
LOG_TINY = np.log(1e-300)
TELEMETRY_COLUMNS = ("pass", "hilbert_distance", "ratio", "residual_rho0", "residual_rho1")


# -- measures ---------------------------------------------------------------------


@dataclass(frozen=True)
class DensitySpec:
    """Named unnormalised density: ``uniform`` or truncated ``gaussian(mean, cov)``."""

    kind: str = "uniform"
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.mean is None or self.cov is None:
                raise ValueError("gaussian density needs mean and cov")
            mean = np.asarray(self.mean, dtype=float).ravel()
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            if cov.shape != (mean.size, mean.size):
                raise ValueError(f"cov must be {mean.size}x{mean.size}, got {cov.shape}")
            if np.linalg.eigvalsh(0.5 * (cov + cov.T))[0] <= 0:
                raise ValueError("cov must be positive definite")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "cov", cov)

    def __call__(self, X):
        X = np.atleast_2d(X)
        if self.kind == "uniform":
            return np.ones(X.shape[0])
        D = X - self.mean
        q = np.einsum("ki,ki->k", D, np.linalg.solve(self.cov, D.T).T)
        return np.exp(-0.5 * q)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Quadrature representation of a density on its support.

    ``masses = weights * densities`` sum to one.  Weights are quadrature
    weights (``1/count`` for Monte-Carlo points, cell volumes for grids).
    """

    points: np.ndarray
    weights: np.ndarray
    densities: np.ndarray
    support: Optional[ConvexSupport] = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        rho = np.asarray(self.densities, dtype=float).ravel()
        if not (P.shape[0] == w.size == rho.size):
            raise ValueError("points, weights and densities must have equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        if np.any(rho < 0) or not np.all(np.isfinite(rho)):
            raise ValueError("densities must be nonnegative and finite")
        total = float(w @ rho)
        if total <= 0:
            raise ValueError("measure has zero total mass")
        rho = rho / total
        if self.support is not None:
            if self.support.dim != P.shape[1]:
                raise ValueError("points and support differ in dimension")
            inside = self.support.contains(P, tol=1e-9)
            if not np.all(inside):
                raise ValueError(f"{int(np.sum(~inside))} points lie outside the declared support")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "densities", rho)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def masses(self):
        return self.weights * self.densities

    def mean(self):
        return self.masses @ self.points

    def cov(self):
        D = self.points - self.mean()
        return (D * self.masses[:, None]).T @ D


def discretize_support(set_, density=None, count=200, seed=0, max_draws=10**7):
    """Sample a support set and attach density values.

    Points come from seeded rejection sampling in the bounding box (a point
    cloud contributes all its points).  Weights are ``1/count``.

    Raises
    ------
    SupportError
        If fewer than 0.1 % of the box samples land in the set.
    """
    density = DensitySpec() if density is None else density
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    if isinstance(set_, PointCloud):
        P = set_.points
    else:
        lo, hi = set_.bounding_box()
        if np.all(hi - lo == 0):
            P = np.repeat(lo[None], count, axis=0)
        else:
            rng = np.random.default_rng(seed)
            chunks, got, drawn = [], 0, 0
            batch = max(4 * count, 1024)
            while got < count:
                X = rng.uniform(lo, hi, size=(batch, set_.dim))
                drawn += batch
                keep = X[set_.contains(X)]
                chunks.append(keep)
                got += keep.shape[0]
                if drawn >= 10 * batch and got < 1e-3 * drawn:
                    raise SupportError(
                        f"rejection sampling accepted {got}/{drawn} draws; the support is degenerate"
                    )
                if drawn > max_draws:
                    raise SupportError(f"rejection sampling exceeded {max_draws} draws")
            P = np.concatenate(chunks)[:count]
    k = P.shape[0]
    return DiscreteMeasure(P, np.full(k, 1.0 / k), density(P), support=set_)


def grid_measure(set_, per_dim, density=None):
    """Cell-centred tensor grid over the bounding box, restricted to the set.

    Weights are cell volumes, so sums against the weights approximate
    Lebesgue integrals.
    """
    density = DensitySpec() if density is None else density
    lo, hi = set_.bounding_box()
    h = (hi - lo) / per_dim
    axes = [lo[i] + h[i] * (np.arange(per_dim) + 0.5) for i in range(set_.dim)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, set_.dim)
    G = G[set_.contains(G)]
    return DiscreteMeasure(G, np.full(G.shape[0], float(np.prod(h))), density(G), support=set_)


def sample_measure(mu, count, seed=0):
    """Draw ``count`` atoms of ``mu`` with probabilities ``masses``."""
    rng = np.random.default_rng(seed)
    p = mu.masses / mu.masses.sum()
    return mu.points[rng.choice(len(mu), size=count, p=p)]


# -- kernel matrix and Hilbert metric -------------------------------------------


class KernelMatrix:
    """Log-entries ``log q(x_i, y_j)`` of the transition kernel between two measures."""

    def __init__(self, log_entries, kernel=None):
        L = np.ascontiguousarray(log_entries, dtype=float)
        if L.ndim != 2:
            raise ValueError("kernel matrix must be 2-d")
        self.log = L
        self.logT = np.ascontiguousarray(L.T)
        self.kernel = kernel

    @property
    def shape(self):
        return self.log.shape

    def dense(self):
        return np.exp(self.log)

    def log_row_sums(self, log_v):
        """``log (K v)`` for a positive vector given by its logarithm."""
        return _backend.lse_rows(self.log, log_v)

    def log_col_sums(self, log_u):
        """``log (K^T u)``."""
        return _backend.lse_rows(self.logT, log_u)


def kernel_matrix(kernel, mu0, mu1):
    """Transition-kernel matrix ``K_ij = q(0, x_i, 1, y_j)`` (stored as logs)."""
    if mu0.dim != kernel.system.n or mu1.dim != kernel.system.n:
        raise ValueError("measure dimension does not match the kernel")
    return KernelMatrix(kernel.log_matrix(mu0.points, mu1.points), kernel)


def hilbert_metric_log(log_u, log_v):
    """Hilbert projective distance of ``exp(log_u)`` and ``exp(log_v)``."""
    d = np.asarray(log_u, dtype=float) - np.asarray(log_v, dtype=float)
    return float(np.max(d) - np.min(d))


def hilbert_metric(u, v):
    """``log max(u/v) + log max(v/u)`` for strictly positive vectors of equal length."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    if np.any(u <= 0) or np.any(v <= 0):
        raise DomainError("Hilbert metric needs strictly positive vectors")
    return hilbert_metric_log(np.log(u), np.log(v))


def usable_ratios(distances, floor=NOISE_FLOOR):
    """Ratios ``d[k+1] / d[k]`` over consecutive distances both above ``floor``."""
    d = np.asarray(distances, dtype=float)
    ok = np.isfinite(d) & (d > floor)
    pair = ok[:-1] & ok[1:]
    return d[1:][pair] / d[:-1][pair]


def empirical_contraction(distances, floor=NOISE_FLOOR):
    """Largest successive-distance ratio, or ``None`` with fewer than 3 usable distances."""
    d = np.asarray(distances, dtype=float)
    if np.count_nonzero(np.isfinite(d) & (d > floor)) < 3:
        return None
    r = usable_ratios(d, floor)
    return float(r.max()) if r.size else None


# -- solver -------------------------------------------------------------------------


@dataclass(frozen=True)
class SchrodingerPotentials:
    """Positive solution pair, stored as logarithms.

    The pair is defined up to ``(c * phi_hat0, phi1 / c)``; the stored one
    has ``<w1, log phi1> = 0``.
    """

    log_phi_hat_0: np.ndarray
    log_phi_1: np.ndarray
    gauge: str = "weighted-mean(log phi1) = 0"

    @property
    def phi_hat_0(self):
        return np.exp(self.log_phi_hat_0)

    @property
    def phi_1(self):
        return np.exp(self.log_phi_1)


@dataclass(frozen=True)
class PassRecord:
    index: int
    hilbert_distance: float
    ratio: float
    residual_rho0: float
    residual_rho1: float
    hilbert_distance_phi_hat0: float


@dataclass
class BridgeSolution:
    potentials: SchrodingerPotentials
    history: list
    kappa_hat: Optional[float]
    iterations: int
    converged: bool
    mu0: DiscreteMeasure
    mu1: DiscreteMeasure
    K: KernelMatrix
    gamma: Optional[float] = None

    @property
    def distances(self):
        return np.array([r.hilbert_distance for r in self.history])

    @property
    def residuals(self):
        if not self.history:
            return (np.inf, np.inf)
        last = self.history[-1]
        return (last.residual_rho0, last.residual_rho1)

    def coupling(self):
        """Discrete optimal coupling ``pi_ij = w0_i phi_hat0_i K_ij w1_j phi1_j``."""
        p = self.potentials
        L = (
            self.K.log
            + (np.log(self.mu0.weights) + p.log_phi_hat_0)[:, None]
            + (np.log(self.mu1.weights) + p.log_phi_1)[None, :]
        )
        return np.exp(L)


def _log_pos(x, what):
    if np.any(x <= 0):
        raise DomainError(f"{what} must be strictly positive for the fixed-point recursion")
    return np.log(x)


def sinkhorn_solve(K, mu0, mu1, tol=1e-12, max_pass=1000, gamma=None, init_log_phi1=None):
    """Solve the discrete Schrodinger system by the alternating fixed-point recursion.

    Parameters
    ----------
    K : KernelMatrix
        Kernel between the atoms of ``mu0`` (rows) and ``mu1`` (columns).
    tol : float
        Stop once the Hilbert distance between successive ``phi1`` falls below.
    max_pass : int
        Pass budget.  Running out is reported via ``converged=False``.
    gamma : float, optional
        A-priori worst-case coefficient, stored on the solution.
    init_log_phi1 : array, optional
        Starting ``log phi1`` (default zeros, i.e. ``phi1 = 1``).
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if K.shape != (len(mu0), len(mu1)):
        raise ValueError(f"kernel shape {K.shape} does not match measures ({len(mu0)}, {len(mu1)})")
    lw0, lw1 = np.log(mu0.weights), np.log(mu1.weights)
    lr0 = _log_pos(mu0.densities, "source densities")
    lr1 = _log_pos(mu1.densities, "target densities")
    w1n = mu1.weights / mu1.weights.sum()
    rho0, rho1 = mu0.densities, mu1.densities

    lp1 = np.zeros(len(mu1)) if init_log_phi1 is None else np.array(init_log_phi1, dtype=float)
    s = K.log_row_sums(lw1 + lp1)
    lph0_prev = None
    history = []
    d_prev = np.nan
    converged = False
    for k in range(1, max_pass + 1):
        lph0 = lr0 - s
        t = K.log_col_sums(lw0 + lph0)
        lp1_new = lr1 - t
        g = float(w1n @ lp1_new)
        lp1_new -= g
        lph0 += g
        t += g
        d = hilbert_metric_log(lp1_new, lp1)
        d_hat = np.nan if lph0_prev is None else hilbert_metric_log(lph0, lph0_prev)
        s = K.log_row_sums(lw1 + lp1_new)
        r0 = float(mu0.weights @ np.abs(np.exp(lph0 + s) - rho0))
        r1 = float(mu1.weights @ np.abs(np.exp(lp1_new + t) - rho1))
        usable = d_prev > NOISE_FLOOR and d > NOISE_FLOOR
        ratio = d / d_prev if usable else np.nan
        history.append(PassRecord(k, d, ratio, r0, r1, d_hat))
        lp1, lph0_prev, d_prev = lp1_new, lph0, d
        if d < tol:
            converged = True
            break
    potentials = SchrodingerPotentials(lph0_prev, lp1)
    kappa = empirical_contraction([r.hilbert_distance for r in history])
    return BridgeSolution(potentials, history, kappa, len(history), converged, mu0, mu1, K, gamma)


def write_telemetry(solution, path):
    """Write per-pass telemetry as CSV (9 significant digits, LF line endings).

    ``ratio`` is left empty when either distance is below the noise floor.
    """

    def fmt(x):
        return "" if not np.isfinite(x) else f"{x:.9g}"

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TELEMETRY_COLUMNS)
        for r in solution.history:
            writer.writerow(
                [r.index, fmt(r.hilbert_distance), fmt(r.ratio), fmt(r.residual_rho0), fmt(r.residual_rho1)]
            )


# -- Schrodinger factors and optimal control ---------------------------------------


def _forward_kernel(system, t, steps):
    return TransitionKernel(system, 0.0, t, steps)


def _backward_kernel(system, t, steps):
    return TransitionKernel(system, t, 1.0, steps)


def log_phi_hat(system, potentials, mu0, t, X, steps=DEFAULT_STEPS, kernel=None):
    """``log phi_hat(t, x) = log sum_i w_i q(0, x_i, t, x) phi_hat0(x_i)``."""
    ker = _forward_kernel(system, t, steps) if kernel is None else kernel
    logc = np.log(mu0.weights) + potentials.log_phi_hat_0 + ker.log_norm
    lse, _ = _backend.mixture_stats(ker.target_coords(X), ker.source_coords(mu0.points), logc)
    return lse


def log_phi_and_grad(system, potentials, mu1, t, X, steps=DEFAULT_STEPS, kernel=None):
    """``log phi(t, x)`` and its gradient in ``x`` (closed form through the Gaussian mixture)."""
    ker = _backward_kernel(system, t, steps) if kernel is None else kernel
    A = ker.source_coords(X)
    logc = np.log(mu1.weights) + potentials.log_phi_1 + ker.log_norm
    lse, bbar = _backend.mixture_stats(A, ker.target_coords(mu1.points), logc)
    grad = (bbar - A) @ ker.source_map
    return lse, grad


def schrodinger_factors(system, potentials, mu0, mu1, t, X, steps=DEFAULT_STEPS):
    """Values of ``phi_hat(t, .)`` and ``phi(t, .)`` at the query points.

    Their product is the density of the optimally controlled state at time
    ``t``.  Requires ``0 < t < 1`` unless the sub-interval Gramian is regular.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lh = log_phi_hat(system, potentials, mu0, t, X, steps)
    lp, _ = log_phi_and_grad(system, potentials, mu1, t, X, steps)
    return np.exp(lh), np.exp(lp)


class BridgeControl:
    """Vectorised optimal feedback ``u(t, x) = 2 eps B(t)^T grad log phi(t, x)``.

    Sub-interval kernels are cached per time.  Rows where ``phi`` underflows
    below ``1e-300`` come back as NaN.
    """

    def __init__(self, system, potentials, mu1, steps=DEFAULT_STEPS):
        self.system = system
        self.potentials = potentials
        self.mu1 = mu1
        self.steps = steps
        self._kernels = {}

    def kernel(self, t):
        ker = self._kernels.get(t)
        if ker is None:
            ker = self._kernels[t] = _backward_kernel(self.system, t, self.steps)
        return ker

    def log_phi_and_grad(self, t, X):
        return log_phi_and_grad(self.system, self.potentials, self.mu1, t, X, kernel=self.kernel(t))

    def __call__(self, t, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lse, grad = self.log_phi_and_grad(t, X)
        U = 2.0 * self.system.epsilon * grad @ self.system.B(t)
        U[~(lse >= LOG_TINY)] = np.nan
        return U


def optimal_control(system, potentials, mu1, t, x, steps=DEFAULT_STEPS):
    """Optimal control at a single state.

    Raises
    ------
    EvaluationError
        If ``phi(t, x) < 1e-300`` (query far outside the reachable support).
    """
    x = np.asarray(x, dtype=float)
    lse, grad = log_phi_and_grad(system, potentials, mu1, t, x[None], steps)
    if not lse[0] >= LOG_TINY:
        raise EvaluationError(f"phi({t:.6g}, x) underflows at x={x}")
    return 2.0 * system.epsilon * grad[0] @ system.B(t)


# -- Monte-Carlo verification ------------------------------------------------------


@dataclass
class SimulationResult:
    terminal: np.ndarray
    excluded: int
    valid: np.ndarray = field(repr=False)


def time_grid(steps, grading=1.0):
    """Grid ``t_k = 1 - (1 - k/steps)^grading`` on ``[0, 1]``.

    ``grading > 1`` clusters nodes near ``t = 1``, where the bridge feedback
    gain grows like ``(1 - t)^{-1}`` or faster (higher-order integrators).
    """
    if steps < 1 or not grading >= 1.0:
        raise DomainError("need steps >= 1 and grading >= 1")
    return 1.0 - (1.0 - np.arange(steps + 1) / steps) ** grading


def auto_grading(system, steps, min_last_step=1e-4, cap=1.5):
    """Grid grading for :func:`simulate_bridge`.

    Uniform for drift-free systems; otherwise up to ``cap``, limited so the
    last interval stays above ``min_last_step`` (shorter sub-interval
    Gramians of higher-order integrators fail the SPD threshold).
    """
    if system.drift_free or steps <= 1:
        return 1.0
    return float(min(cap, max(1.0, np.log(min_last_step) / np.log(1.0 / steps))))


def simulate_bridge(system, control, x0, steps=500, seed=0, block=1024, grading=1.0):
    """Euler-Maruyama paths of ``dx = (A x + B u) dt + sqrt(2 eps) B dw`` on ``[0, 1]``.

    ``control(t, X)`` returns one control row per state row (``None`` means
    ``u = 0``).  Path ``i`` draws its Wiener increments from
    ``default_rng(seed + i)``, so results do not depend on ``block``.  Paths
    whose control evaluates to a non-finite value are excluded from
    ``terminal`` and counted in ``excluded``.  ``grading`` selects the time
    grid (see :func:`time_grid`; 1 is uniform).
    """
    X0 = np.atleast_2d(np.asarray(x0, dtype=float))
    N, n = X0.shape
    if n != system.n or steps < 1 or N < 1:
        raise ValueError("x0 must be (paths, n) with paths >= 1 and steps >= 1")
    ts = time_grid(steps, grading)
    dts = np.diff(ts)
    noise = np.sqrt(2.0 * system.epsilon * dts)
    out = np.empty_like(X0)
    valid = np.ones(N, dtype=bool)
    for start in range(0, N, block):
        stop = min(start + block, N)
        X = X0[start:stop].copy()
        dW = np.stack(
            [np.random.default_rng(seed + i).standard_normal((steps, system.m)) for i in range(start, stop)],
            axis=1,
        )
        ok = np.ones(stop - start, dtype=bool)
        for k in range(steps):
            t, dt = ts[k], dts[k]
            At, Bt = system.A(t), system.B(t)
            drift = X @ At.T
            if control is not None:
                U = np.asarray(control(t, X), dtype=float).reshape(X.shape[0], system.m)
                bad = ~np.all(np.isfinite(U), axis=1)
                if np.any(bad):
                    ok &= ~bad
                    U[bad] = 0.0
                drift += U @ Bt.T
            X += drift * dt + noise[k] * (dW[k] @ Bt.T)
        out[start:stop] = X
        valid[start:stop] = ok & np.all(np.isfinite(X), axis=1)
    return SimulationResult(out[valid], int(N - valid.sum()), valid)


def compare_moments(samples, mu):
    """Sample mean/covariance against the moments of ``mu`` in Monte-Carlo standard errors."""
    S = np.atleast_2d(samples)
    N = S.shape[0]
    mean = S.mean(axis=0)
    D = S - mean
    prods = D[:, :, None] * D[:, None, :]
    cov = prods.mean(axis=0)
    se_mean = S.std(axis=0, ddof=1) / np.sqrt(N)
    se_cov = prods.std(axis=0, ddof=1) / np.sqrt(N)
    tm, tc = mu.mean(), mu.cov()
    z_mean = np.abs(mean - tm) / se_mean
    z_cov = np.abs(cov - tc) / se_cov
    return {
        "paths": N,
        "mean": mean,
        "target_mean": tm,
        "se_mean": se_mean,
        "z_mean": z_mean,
        "cov": cov,
        "target_cov": tc,
        "se_cov": se_cov,
        "z_cov": z_cov,
        "max_z": float(max(z_mean.max(), z_cov.max())),
    }
