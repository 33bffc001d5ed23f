import numpy as np
import pytest

from oracles import gaussian_logpdf, tensor_trapezoid
from sbcontract.dynamics import GramianBundle, LinearSystem, controllability_gramian, make_system
from sbcontract.errors import DomainError, SingularIntervalError
from sbcontract.geometry import Ball, PointCloud
from sbcontract.kernels import (
    TransitionKernel,
    brownian_kernel,
    kernel_bounds,
    linear_kernel,
    log_linear_kernel,
)

SQ2 = np.sqrt(2.0)


def test_brownian_examples():
    assert brownian_kernel(0.25, [0.0], [0.0]) == pytest.approx(np.pi**-0.5, rel=1e-14)
    assert brownian_kernel(0.5, [0.0, 0.0], [0.0, 0.0]) == pytest.approx(1 / (2 * np.pi), rel=1e-14)
    assert brownian_kernel(0.25, [0.0], [1.0]) == pytest.approx(np.pi**-0.5 / np.e, rel=1e-14)
    with pytest.raises(DomainError):
        brownian_kernel(0.0, [0.0], [0.0])
    with pytest.raises(DomainError):
        linear_kernel(GramianBundle.identity(1), -1.0, [0.0], [0.0])


def test_linear_examples(di_bundle, rng):
    ident = GramianBundle.identity(2)
    x0, x1 = rng.normal(size=(2, 5, 2))
    assert np.allclose(linear_kernel(ident, 0.3, x0, x1), brownian_kernel(0.3, x0, x1), rtol=1e-14)
    q00 = 1 / (2 * np.pi * np.sqrt(1 / 12))
    assert linear_kernel(di_bundle, 0.5, [0.0, 0.0], [0.0, 0.0]) == pytest.approx(q00, rel=1e-10)
    assert q00 == pytest.approx(0.551329, rel=1e-6)
    assert linear_kernel(di_bundle, 0.5, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(q00 * np.exp(-6), rel=1e-9)


def test_linear_kernel_against_textbook_gaussian(di_bundle, rng):
    eps = 0.7
    x0, x1 = rng.normal(size=(2, 50, 2))
    got = log_linear_kernel(di_bundle, eps, x0, x1)
    ref = [gaussian_logpdf(b, di_bundle.Phi @ a, 2 * eps * di_bundle.M)[0] for a, b in zip(x0, x1)]
    assert np.allclose(got, ref, rtol=1e-11)


@pytest.mark.parametrize("name", ["double_integrator", "oscillator", "damped_ltv", "rotating_ltv"])
def test_route_agreement(name, rng):
    system = make_system(name, 0.5)
    b = controllability_gramian(system)
    x0 = rng.normal(size=(1000, system.n))
    x1 = rng.normal(size=(1000, system.n))
    g = log_linear_kernel(b, 0.5, x0, x1, route="gaussian")
    f = log_linear_kernel(b, 0.5, x0, x1, route="factored")
    # relative error of the densities, evaluated without underflow
    assert np.max(np.expm1(np.abs(g - f))) < 1e-12


@pytest.mark.parametrize("name,eps", [("brownian1", 0.3), ("brownian", 0.5), ("double_integrator", 0.5), ("oscillator", 1.0)])
def test_normalization(name, eps, rng):
    system = LinearSystem.classical(1, eps) if name == "brownian1" else make_system(name, eps)
    b = controllability_gramian(system)
    x0 = rng.normal(size=system.n)
    mean = b.Phi @ x0
    half = 8 * np.sqrt(2 * eps * b.lambda_max)
    total = tensor_trapezoid(
        lambda X: linear_kernel(b, eps, x0, X), mean - half, mean + half, 4001 if system.n == 1 else 601
    )
    assert total == pytest.approx(1.0, abs=1e-6)


def test_kernel_bounds_examples(example1):
    p = PointCloud([[0.0, 0.0]])
    kb = kernel_bounds(0.25, p, p)
    assert kb.alpha_tilde == kb.beta_tilde == 0.0
    assert kb.alpha == kb.beta == pytest.approx(brownian_kernel(0.25, [0, 0], [0, 0]))
    kb = kernel_bounds(0.5, Ball([0.0, 0.0], 1.0), Ball([4.0, 0.0], 1.0))
    assert (kb.alpha_tilde, kb.beta_tilde) == pytest.approx((36.0, 4.0))
    assert kb.log_ratio == pytest.approx(16.0)
    assert np.log(kb.beta / kb.alpha) == pytest.approx(16.0, rel=1e-12)
    b, X0, X1 = example1
    kb = kernel_bounds(0.5, X0, X1, bundle=b)
    assert kb.alpha_tilde == pytest.approx(22 + 12 * SQ2, rel=1e-10)
    assert kb.beta_tilde == pytest.approx(22 - 12 * SQ2, rel=1e-9)
    norm = 1 / np.sqrt((4 * np.pi * 0.5) ** 2 * np.linalg.det(b.M))
    assert kb.alpha == pytest.approx(norm * np.exp(-kb.alpha_tilde / 2), rel=1e-12)
    assert kb.beta == pytest.approx(norm * np.exp(-kb.beta_tilde / 2), rel=1e-12)


def test_bound_validity(example1, rng):
    b, X0, X1 = example1
    kb = kernel_bounds(0.5, X0, X1, bundle=b)
    from sbcontract.bridge import discretize_support

    P = discretize_support(X0, count=10_000, seed=1).points
    Q = discretize_support(X1, count=10_000, seed=2).points
    logq = log_linear_kernel(b, 0.5, P, Q)
    assert np.all(logq >= kb.log_alpha - 1e-9)
    assert np.all(logq <= kb.log_beta + 1e-9)


def test_positive_and_lipschitz(di_bundle, rng):
    X = rng.uniform(-3, 3, size=(2000, 2))
    y = np.zeros(2)
    logq = log_linear_kernel(di_bundle, 0.5, X, y)
    assert np.all(np.isfinite(logq))
    assert np.all(np.exp(logq) > 0)
    h = 1e-6
    fd = (log_linear_kernel(di_bundle, 0.5, X + [h, 0], y) - logq) / h
    # |grad| <= |Phi^T M^-1 (Phi x - y)| / (2 eps) bounded on the box
    bound = np.linalg.norm(di_bundle.Phi.T @ di_bundle.M_inv, 2) * 6 * np.sqrt(2) / (2 * 0.5)
    assert np.max(np.abs(fd)) <= bound


def test_transition_kernel_matrix(rng):
    ker = TransitionKernel.classical(2, 0.4)
    X, Y = rng.normal(size=(7, 2)), rng.normal(size=(5, 2))
    L = ker.log_matrix(X, Y)
    ref = np.log(brownian_kernel(0.4, X[:, None, :], Y[None, :, :]))
    assert np.allclose(L, ref, rtol=1e-13)


def test_transition_kernel_singular_interval():
    system = make_system("double_integrator", 0.5)
    with pytest.raises(SingularIntervalError, match="interior"):
        TransitionKernel(system, 1.0, 1.0)
    with pytest.raises(SingularIntervalError, match="interior"):
        TransitionKernel(system, 1.0 - 1e-7, 1.0)
