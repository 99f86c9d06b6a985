"""Incompressible neo-Hookean constitutive functions and their derivatives.

All operations accept stacked 2x2 tensors (leading axes broadcast) and use
closed-form 2x2 determinants, cofactors and inverses. The stress sign
convention is fixed repo-wide as

    total stress = mu (K + I) - p Q(K),

with Q the derivative of the chosen incompressibility constraint with
respect to the displacement gradient K. The two constraint variants are

    c1: det(K + I) - 1,    Q1 = cof(K + I),
    c2: ln det(K + I),     Q2 = (K + I)^{-T}.
"""

from dataclasses import dataclass, field

import numpy as np

C1 = "c1"
C2 = "c2"
_VARIANTS = (C1, C2)

IDENTITY = np.eye(2)


class NonpositiveJacobianError(Exception):
    """det(K + I) <= 0 where the constraint or line search requires J > 0."""


class SingularDeformationError(Exception):
    """K + I is singular; the inverse transpose does not exist."""


@dataclass(frozen=True)
class Material:
    """Material data: shear modulus, constraint variant, density, body force.

    body_force maps (n, 2) reference points to (n, 2) force densities;
    None means zero.
    """

    mu: float
    constraint: str = C1
    rho0: float = 1.0
    body_force: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.constraint not in _VARIANTS:
            raise ValueError(f"constraint must be one of {_VARIANTS}")

    def body_force_at(self, points):
        if self.body_force is None:
            return np.zeros_like(np.asarray(points, dtype=float))
        return np.asarray(self.body_force(points), dtype=float)


def _det2(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _cof2(F):
    """Cofactor matrix: det(F) F^{-T}, polynomial in F (no inverse needed)."""
    out = np.empty_like(F)
    out[..., 0, 0] = F[..., 1, 1]
    out[..., 0, 1] = -F[..., 1, 0]
    out[..., 1, 0] = -F[..., 0, 1]
    out[..., 1, 1] = F[..., 0, 0]
    return out


def _inv_transpose(F):
    det = _det2(F)
    if np.any(np.abs(det) < 1e-300):
        raise SingularDeformationError("K + I is singular")
    return _cof2(F) / det[..., None, None]


def elastic_stress(K, mu):
    """Neo-Hookean elastic part: mu (K + I)."""
    return mu * (np.asarray(K, dtype=float) + IDENTITY)


def constraint_value(K, variant):
    """C(J) with J = det(K + I): J - 1 for c1, ln J for c2."""
    J = _det2(np.asarray(K, dtype=float) + IDENTITY)
    if variant == C1:
        return J - 1.0
    if variant == C2:
        if np.any(J <= 0.0):
            raise NonpositiveJacobianError(
                f"ln J undefined: min J = {np.min(J):.3e}"
            )
        return np.log(J)
    raise ValueError(f"unknown constraint variant {variant!r}")


def constraint_tensor(K, variant):
    """Q(K) = dC/dK: cof(K + I) for c1, (K + I)^{-T} for c2."""
    F = np.asarray(K, dtype=float) + IDENTITY
    if variant == C1:
        return _cof2(F)
    if variant == C2:
        return _inv_transpose(F)
    raise ValueError(f"unknown constraint variant {variant!r}")


def constraint_tensor_derivative(K, dK, variant):
    """Directional derivative of Q at K in direction dK.

    For c2 this is -F^{-T} dK^T F^{-T}. For c1 the general identity
    det(F) [(F^{-T} : dK) F^{-T} - F^{-T} dK^T F^{-T}] collapses in 2D to
    cof(dK), since the cofactor is linear there; the linear form stays
    finite through det(K + I) = 0, which matters for line-search trial
    states under c1.
    """
    dK = np.asarray(dK, dtype=float)
    if variant == C1:
        dK, _ = np.broadcast_arrays(dK, np.asarray(K, dtype=float))
        return _cof2(dK)
    if variant == C2:
        F = np.asarray(K, dtype=float) + IDENTITY
        W = _inv_transpose(F)
        return -np.einsum("...ab,...cb,...cd->...ad", W, dK, W)
    raise ValueError(f"unknown constraint variant {variant!r}")


def total_stress(K, p, material):
    """First Piola-Kirchhoff stress mu (K + I) - p Q(K)."""
    p = np.asarray(p, dtype=float)
    return (
        elastic_stress(K, material.mu)
        - p[..., None, None] * constraint_tensor(K, material.constraint)
    )
