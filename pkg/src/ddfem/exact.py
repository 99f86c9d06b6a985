"""Closed-form solutions: radial inflation of an annulus and manufactured
fields for the linearised problem.

The inflation solution follows the stress convention P = mu F - p cof(F);
under that convention the equilibrium residual fixes the pressure sign
uniquely, which ``verify_exact`` checks by finite differences before any
benchmark run (and detects a deliberately flipped sign).
"""

import numpy as np

from . import materials as mat


class ExactInflation2D:
    """Radially symmetric inflation of the annulus R_in = 0.5, R_out = 1.

    The outer boundary moves radially by a factor lam; the exact map is
    r(R) = sqrt(R^2 + (lam^2 - 1) R_out^2), which is volume preserving.
    All evaluators accept (n, 2) arrays of reference points; the fields
    extend smoothly to a neighbourhood of the annulus, so points slightly
    off the curved boundary (polygonal meshes) are fine.
    """

    def __init__(self, lam, mu=1.0, r_in=0.5, r_out=1.0):
        if lam < 1.0:
            raise ValueError("inflation requires lam >= 1")
        self.lam = float(lam)
        self.mu = float(mu)
        self.r_in = float(r_in)
        self.r_out = float(r_out)
        self.A = (lam**2 - 1.0) * r_out**2

    def _radii(self, X):
        R = np.linalg.norm(np.asarray(X, dtype=float), axis=-1)
        return R, np.sqrt(R**2 + self.A)

    def u(self, X):
        X = np.asarray(X, dtype=float)
        R, r = self._radii(X)
        return (r / R - 1.0)[..., None] * X

    def K(self, X):
        X = np.asarray(X, dtype=float)
        R, r = self._radii(X)
        eye = np.zeros(X.shape[:-1] + (2, 2))
        eye[..., 0, 0] = eye[..., 1, 1] = 1.0
        outer = X[..., :, None] * X[..., None, :]
        return (r / R - 1.0)[..., None, None] * eye - (
            self.A / (r * R**3)
        )[..., None, None] * outer

    def p(self, X):
        R, r = self._radii(np.asarray(X, dtype=float))
        mu, A = self.mu, self.A
        r_in_def = np.sqrt(self.r_in**2 + A)
        return (
            mu * R**2 / r**2
            - 0.5 * mu * A * (1.0 / r_in_def**2 - 1.0 / r**2)
            - mu * np.log(r_in_def * R / (r * self.r_in))
        )

    def P(self, X):
        F = self.K(X) + mat.IDENTITY
        return self.mu * F - self.p(X)[..., None, None] * mat._cof2(F)

    def div_P(self, X):
        return np.zeros_like(np.asarray(X, dtype=float))


def exact_inflation(lam, mu, X):
    """Exact (u, K, P, p) at points of the closed annulus.

    Raises ValueError if any point lies outside [R_in, R_out] (beyond a
    1e-12 slack).
    """
    sol = ExactInflation2D(lam, mu)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.linalg.norm(X, axis=-1)
    if np.any(R < sol.r_in - 1e-12) or np.any(R > sol.r_out + 1e-12):
        raise ValueError("point outside the annulus [0.5, 1.0]")
    return sol.u(X), sol.K(X), sol.P(X), sol.p(X)


def verify_exact(lam, mu=1.0, n_points=100, step=1e-6, seed=0,
                 negate_pressure=False):
    """Max strong-form violation of the exact inflation fields.

    Checks, at random interior points of the quarter annulus:
    equilibrium div P = 0 (central finite differences of P), the
    constitutive relation P = mu(K + I) - p cof(K + I), and exact volume
    preservation det(K + I) = 1. ``negate_pressure`` builds P with the
    wrong pressure sign so tests can confirm the oracle rejects it.
    """
    sol = ExactInflation2D(lam, mu)
    rng = np.random.default_rng(seed)
    margin = 10.0 * step
    R = rng.uniform(sol.r_in + margin, sol.r_out - margin, n_points)
    theta = rng.uniform(0.0, np.pi / 2.0, n_points)
    X = np.column_stack([R * np.cos(theta), R * np.sin(theta)])

    sign = -1.0 if negate_pressure else 1.0

    def stress(pts):
        F = sol.K(pts) + mat.IDENTITY
        return mu * F - sign * sol.p(pts)[..., None, None] * mat._cof2(F)

    div = np.zeros((n_points, 2))
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = step
        div += (stress(X + dx)[..., :, j] - stress(X - dx)[..., :, j]) / (2 * step)
    worst = np.max(np.abs(div))

    material = mat.Material(mu=mu, constraint=mat.C1)
    consistency = stress(X) - mat.total_stress(sol.K(X), sign * sol.p(X), material)
    worst = max(worst, np.max(np.abs(consistency)))

    J = mat._det2(sol.K(X) + mat.IDENTITY)
    worst = max(worst, np.max(np.abs(J - 1.0)))
    return float(worst)


class ManufacturedLinearised:
    """Compatible data for the linearised problem on the unit square.

    Two families. The smooth one is a homogeneous-Stokes-type solution
    built from the biharmonic stream function x sin(pi x) sinh(pi y)
    (scaled): the displacement is divergence free, the stress is
    divergence free (zero body force) and the pressure varies, so all
    rate targets including the k + 2 corrected-displacement rate are
    observable. It carries inhomogeneous displacement data on the whole
    boundary; the pressure constant is fixed by pinning one DOF. The
    polynomial family lies inside the order-k FE spaces for exactness
    tests (with a nonzero constant body force for k = 1).
    """

    def __init__(self, k, mu=1.0, kind="smooth", scale=0.1):
        if kind not in ("smooth", "polynomial"):
            raise ValueError(f"unknown manufactured kind {kind!r}")
        self.k = k
        self.mu = mu
        self.kind = kind
        self.scale = scale

    def u(self, X):
        X = np.asarray(X, dtype=float)
        x, y = X[..., 0], X[..., 1]
        if self.kind == "smooth":
            pi, s = np.pi, self.scale
            return np.stack(
                [s * x * pi * np.sin(pi * x) * np.cosh(pi * y),
                 -s * (np.sin(pi * x) + x * pi * np.cos(pi * x)) * np.sinh(pi * y)],
                axis=-1)
        if self.k == 1:
            return np.stack([np.full_like(x, 0.3), np.full_like(x, -0.2)], axis=-1)
        return np.stack([0.2 * x + 0.3 * y + 0.1, -0.2 * y - 0.1], axis=-1)

    def K(self, X):
        X = np.asarray(X, dtype=float)
        x, y = X[..., 0], X[..., 1]
        out = np.zeros(X.shape[:-1] + (2, 2))
        if self.kind == "smooth":
            pi, s = np.pi, self.scale
            sin, cos = np.sin(pi * x), np.cos(pi * x)
            sinh, cosh = np.sinh(pi * y), np.cosh(pi * y)
            out[..., 0, 0] = s * pi * (sin + x * pi * cos) * cosh
            out[..., 0, 1] = s * x * pi**2 * sin * sinh
            out[..., 1, 0] = -s * pi * (2.0 * cos - x * pi * sin) * sinh
            out[..., 1, 1] = -out[..., 0, 0]
        elif self.k == 2:
            out[..., 0, 0] = 0.2
            out[..., 0, 1] = 0.3
            out[..., 1, 1] = -0.2
        return out

    def p(self, X):
        X = np.asarray(X, dtype=float)
        x, y = X[..., 0], X[..., 1]
        mu = self.mu
        if self.kind == "smooth":
            pi, s = np.pi, self.scale
            return mu * (1.0 + 2.0 * s * pi * np.sin(pi * x) * np.cosh(pi * y))
        if self.k == 1:
            return mu + 0.4 * (x - 1.0)
        return mu * 1.2 + (x - 1.0) * (0.5 - 0.3 * x + 0.25 * y)

    def P(self, X):
        p = self.p(X)
        out = self.mu * self.K(X)
        shift = self.mu - p
        out[..., 0, 0] += shift
        out[..., 1, 1] += shift
        return out

    def body_force(self, X):
        """rho0 b = -div sigma (with rho0 = 1)."""
        X = np.asarray(X, dtype=float)
        x, y = X[..., 0], X[..., 1]
        if self.kind == "smooth":
            return np.zeros(X.shape[:-1] + (2,))
        if self.k == 1:
            return np.stack([np.full_like(x, 0.4), np.zeros_like(x)], axis=-1)
        # grad p for the order-2 polynomial pressure
        return np.stack(
            [0.5 + 0.3 - 0.6 * x + 0.25 * y, 0.25 * (x - 1.0)], axis=-1)

    def div_P(self, X):
        return -self.body_force(X)
