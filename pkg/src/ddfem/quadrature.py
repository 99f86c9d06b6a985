"""Quadrature rules on the reference triangle and the unit interval.

The reference triangle is T = {(x, y) : x >= 0, y >= 0, x + y <= 1} with
area 1/2; the reference edge is [0, 1]. Low-degree triangle rules are the
classical symmetric ones; higher degrees fall back to a collapsed
Gauss-Jacobi conical product, which keeps all weights positive at any
degree (same strategy as FIAT's "canonical" scheme).
"""

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 10


class UnsupportedDegreeError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    """Positive-weight quadrature rule on a reference element.

    points : (n, dim) array, reference coordinates (dim = 2 triangle, 1 edge)
    weights : (n,) array summing to the reference measure
    exact_degree : highest total polynomial degree integrated exactly
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def n_points(self):
        return len(self.weights)

    def integrate(self, f):
        """Integrate a callable f(points) -> (n,) over the element."""
        return float(self.weights @ np.asarray(f(self.points), dtype=float))


def monomial_integral_triangle(a, b):
    """Exact value of the monomial integral x^a y^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


# classical symmetric rules, exact through the stated degree
_CENTROID = (np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
_THREE_POINT = (
    np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
    np.full(3, 1 / 6),
)


def _conical_rule(degree):
    """Collapsed Gauss-Jacobi x Gauss-Legendre product rule on the triangle.

    Exact for total degree <= 2m - 1 with m points per direction; the
    (1 - x) Jacobian of the Duffy map is absorbed by the Jacobi weight.
    """
    m = (degree + 2) // 2
    xj, wj = roots_jacobi(m, 1.0, 0.0)
    xg, wg = roots_legendre(m)
    xi = 0.5 * (xj + 1.0)
    eta = 0.5 * (xg + 1.0)
    wxi = wj / 4.0
    weta = wg / 2.0
    pts = np.empty((m * m, 2))
    wts = np.empty(m * m)
    idx = 0
    for i in range(m):
        for j in range(m):
            pts[idx] = (xi[i], eta[j] * (1.0 - xi[i]))
            wts[idx] = wxi[i] * weta[j]
            idx += 1
    return pts, wts, 2 * m - 1


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Rule on the reference triangle exact at least for the requested degree."""
    if degree < 0 or degree > MAX_DEGREE:
        raise UnsupportedDegreeError(
            f"triangle rules support degrees 0..{MAX_DEGREE}, got {degree}"
        )
    if degree <= 1:
        pts, wts = _CENTROID
        exact = 1
    elif degree == 2:
        pts, wts = _THREE_POINT
        exact = 2
    else:
        pts, wts, exact = _conical_rule(degree)
    return QuadRule(points=pts.copy(), weights=wts.copy(), exact_degree=exact)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact at least for the requested degree."""
    if degree < 0 or degree > 2 * MAX_DEGREE + 1:
        raise UnsupportedDegreeError(f"edge rule degree {degree} out of range")
    m = max(1, (degree + 2) // 2)
    x, w = roots_legendre(m)
    return QuadRule(
        points=(0.5 * (x + 1.0)).reshape(-1, 1),
        weights=0.5 * w,
        exact_degree=2 * m - 1,
    )
