import numpy as np
import pytest

from ddfem.exact import (
    ExactInflation2D,
    ManufacturedLinearised,
    exact_inflation,
    verify_exact,
)
from ddfem.materials import C1, Material, total_stress


def test_outer_boundary_displacement():
    lam = 2.3
    sol = ExactInflation2D(lam)
    theta = np.linspace(0, np.pi / 2, 7)
    X = np.column_stack([np.cos(theta), np.sin(theta)])  # outer circle
    assert np.allclose(sol.u(X), (lam - 1) * X, atol=1e-13)


def test_identity_at_lambda_one():
    sol = ExactInflation2D(1.0)
    rng = np.random.default_rng(0)
    R = rng.uniform(0.5, 1.0, 40)
    th = rng.uniform(0, np.pi / 2, 40)
    X = np.column_stack([R * np.cos(th), R * np.sin(th)])
    assert np.max(np.abs(sol.u(X))) < 1e-14
    assert np.max(np.abs(sol.K(X))) < 1e-14
    assert np.allclose(sol.p(X), sol.mu)
    assert np.max(np.abs(sol.P(X))) < 1e-13


def test_radial_map_value():
    sol = ExactInflation2D(3.0)
    X = np.array([[0.5, 0.0]])
    expected = np.sqrt(0.25 + 8.0) - 0.5
    assert sol.u(X)[0, 0] == pytest.approx(expected)
    assert sol.u(X)[0, 1] == pytest.approx(0.0)


def test_exact_inflation_domain_check():
    u, K, P, p = exact_inflation(3.0, 1.0, np.array([[0.7, 0.1]]))
    assert np.isfinite(p).all()
    with pytest.raises(ValueError):
        exact_inflation(3.0, 1.0, np.array([[0.1, 0.1]]))


def test_volume_preservation_and_consistency():
    sol = ExactInflation2D(2.5)
    rng = np.random.default_rng(1)
    R = rng.uniform(0.51, 0.99, 50)
    th = rng.uniform(0, np.pi / 2, 50)
    X = np.column_stack([R * np.cos(th), R * np.sin(th)])
    F = sol.K(X) + np.eye(2)
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    assert np.max(np.abs(J - 1.0)) < 1e-12
    material = Material(mu=sol.mu, constraint=C1)
    assert np.max(np.abs(sol.P(X) - total_stress(sol.K(X), sol.p(X), material))) < 1e-12


def test_verify_exact_oracle():
    assert verify_exact(1.0) < 1e-9
    assert verify_exact(3.0) <= 1e-6


def test_verify_exact_detects_flipped_pressure():
    assert verify_exact(3.0, negate_pressure=True) > 1.0


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("kind", ["smooth", "polynomial"])
def test_manufactured_consistency(k, kind):
    """K = grad u, tr K = 0 and div P = -b, all by finite differences."""
    exact = ManufacturedLinearised(k, mu=1.0, kind=kind)
    rng = np.random.default_rng(2)
    X = rng.uniform(0.05, 0.95, size=(40, 2))
    h = 1e-6

    grad_fd = np.zeros((40, 2, 2))
    divP_fd = np.zeros((40, 2))
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        grad_fd[:, :, j] = (exact.u(X + dx) - exact.u(X - dx)) / (2 * h)
        divP_fd += (exact.P(X + dx)[:, :, j] - exact.P(X - dx)[:, :, j]) / (2 * h)

    assert np.max(np.abs(grad_fd - exact.K(X))) < 1e-6
    K = exact.K(X)
    assert np.max(np.abs(K[:, 0, 0] + K[:, 1, 1])) < 1e-12
    assert np.max(np.abs(divP_fd + exact.body_force(X))) < 5e-5
    # sigma = mu K + (mu - p) I
    P = exact.P(X)
    rebuilt = exact.mu * K.copy()
    shift = exact.mu - exact.p(X)
    rebuilt[:, 0, 0] += shift
    rebuilt[:, 1, 1] += shift
    assert np.max(np.abs(P - rebuilt)) < 1e-12
