"""Postprocessing: displacement correction, error norms, rates, evaluation.

The displacement correction solves the global SPD problem
<grad u_corr, grad v> = <K_h, grad v> in continuous vector Lagrange of
order k + 1 with the displacement data imposed nodally, recovering a
continuous displacement one order more accurate than the mixed solution's.
"""

from dataclasses import dataclass
from math import inf

import numpy as np

from .assembly import correction_space, correction_system
from .elements import build_space, cell_geometry
from .quadrature import triangle_rule
from .solver import solve_linear


class PointOutsideMeshError(Exception):
    pass


@dataclass
class NormReport:
    """Error norms of one solve: L2 for u, K, p (and corrected u), L2 and
    H(div) for the stress."""

    h: float
    err_u: float
    err_K: float
    err_P_l2: float
    err_P_hdiv: float
    err_p: float
    err_u_corr: float = None


@dataclass
class JacobianStats:
    """Distribution of the nodal values of the projected Jacobian field."""

    values: np.ndarray
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n_negative: int

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float)
        q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
        return cls(values=values, min=float(values.min()), q1=float(q1),
                   median=float(med), q3=float(q3), max=float(values.max()),
                   n_negative=int(np.count_nonzero(values < 0)))


def _quad_fields(spaces, state, degree):
    """Evaluate all four fields (and div P) at quadrature points of every cell."""
    mesh = spaces.mesh
    rule = triangle_rule(degree)
    pts, w = rule.points, rule.weights
    G, det, _ = cell_geometry(mesh)
    wdet = w[None, :] * det[:, None]
    v0 = mesh.vertices[mesh.cells[:, 0]]
    phys = v0[:, None, :] + np.einsum("cde,qe->cqd", G, pts)

    nb = spaces.K_space.ref.ndof
    bdm_vals, bdm_divs = spaces.K_space.ref.tabulate(pts)
    signs = spaces.K_space.cell_signs[:, :nb]
    Vs = np.einsum("cde,iqe->ciqd", G / det[:, None, None], bdm_vals)
    Vs *= signs[:, :, None, None]
    Ds = (signs[:, :, None] / det[:, None, None]) * bdm_divs[None, :, :]

    C = mesh.n_cells
    us_vals, _ = spaces.u_space.ref.tabulate(pts)
    ps_vals, _ = spaces.p_space.ref.tabulate(pts)
    Kc = state.K[spaces.K_space.cell_dofs].reshape(C, 2, nb)
    Pc = state.P[spaces.P_space.cell_dofs].reshape(C, 2, nb)
    uc = state.u[spaces.u_space.cell_dofs].reshape(C, -1, 2)
    pc = state.p[spaces.p_space.cell_dofs]

    return {
        "rule": rule, "phys": phys, "wdet": wdet,
        "u": np.einsum("cir,iq->cqr", uc, us_vals),
        "K": np.einsum("cri,ciqd->cqrd", Kc, Vs),
        "P": np.einsum("cri,ciqd->cqrd", Pc, Vs),
        "divP": np.einsum("cri,ciq->cqr", Pc, Ds),
        "p": np.einsum("ci,iq->cq", pc, ps_vals),
    }


def _l2(wdet, diff):
    sq = diff**2
    if sq.ndim > 2:
        sq = sq.sum(axis=tuple(range(2, sq.ndim)))
    return float(np.sqrt(np.sum(wdet * sq)))


def evaluate_cg_vector(space, coeffs, ref_points):
    """Values of a continuous vector field at reference points of all cells."""
    vals, _ = space.ref.tabulate(ref_points)
    C = space.mesh.n_cells
    local = coeffs[space.cell_dofs].reshape(C, -1, 2)
    return np.einsum("cir,iq->cqr", local, vals)


def error_norms(spaces, state, exact, corrected=None, quad_degree=None):
    """L2 (and H(div) for the stress) errors against closed-form fields.

    exact provides vectorised callables u, K, P, p and div_P over (n, 2)
    points; corrected is an optional (space, coeffs) pair from
    correct_displacement.
    """
    degree = quad_degree or (2 * spaces.k + 5)
    f = _quad_fields(spaces, state, degree)
    phys = f["phys"].reshape(-1, 2)
    shape = f["phys"].shape[:2]
    wdet = f["wdet"]

    err_u = _l2(wdet, f["u"] - exact.u(phys).reshape(*shape, 2))
    err_K = _l2(wdet, f["K"] - exact.K(phys).reshape(*shape, 2, 2))
    err_P = _l2(wdet, f["P"] - exact.P(phys).reshape(*shape, 2, 2))
    err_div = _l2(wdet, f["divP"] - exact.div_P(phys).reshape(*shape, 2))
    err_p = _l2(wdet, f["p"] - exact.p(phys).reshape(shape))

    err_corr = None
    if corrected is not None:
        corr_space, corr_coeffs = corrected
        u_corr = evaluate_cg_vector(corr_space, corr_coeffs, f["rule"].points)
        err_corr = _l2(wdet, u_corr - exact.u(phys).reshape(*shape, 2))

    return NormReport(
        h=spaces.mesh.h, err_u=err_u, err_K=err_K, err_P_l2=err_P,
        err_P_hdiv=float(np.hypot(err_P, err_div)), err_p=err_p,
        err_u_corr=err_corr,
    )


def field_norms(spaces, state, quad_degree=None):
    """Plain L2 norms of the four solution fields."""
    degree = quad_degree or (2 * spaces.k + 5)
    f = _quad_fields(spaces, state, degree)
    wdet = f["wdet"]
    return {
        "u": _l2(wdet, f["u"]),
        "K": _l2(wdet, f["K"]),
        "P": _l2(wdet, f["P"]),
        "p": _l2(wdet, f["p"]),
    }


def correct_displacement(spaces, state, ubar):
    """Globally continuous displacement of order k + 1 recovered from K_h.

    Returns (space, coefficients); the result satisfies the displacement
    data nodally on the displacement boundary.
    """
    corr_space = correction_space(spaces.mesh, spaces.k, ubar)
    system = correction_system(spaces, state, corr_space)
    return corr_space, solve_linear(system)


def convergence_slope(errors, hs):
    """Least-squares slope of log error against log h.

    Zero errors make the slope undefined ("exact"); this is reported as
    math.inf.
    """
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) < 2 or len(errors) != len(hs):
        raise ValueError("need at least two (error, h) pairs")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must strictly decrease")
    if np.any(errors == 0.0):
        return inf
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)


def last_interval_slope(errors, hs):
    """Observed order between the two finest levels."""
    if errors[-1] == 0.0 or errors[-2] == 0.0:
        return inf
    return float(np.log(errors[-2] / errors[-1]) / np.log(hs[-2] / hs[-1]))


def locate_point(mesh, x, tol=1e-10):
    """Lowest-index cell containing x and its reference coordinates."""
    x = np.asarray(x, dtype=float)
    G, det, _ = cell_geometry(mesh)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    rhs = x[None, :] - v0
    # reference coords by 2x2 solve against each cell map
    lam1 = (G[:, 1, 1] * rhs[:, 0] - G[:, 0, 1] * rhs[:, 1]) / det
    lam2 = (-G[:, 1, 0] * rhs[:, 0] + G[:, 0, 0] * rhs[:, 1]) / det
    inside = (lam1 >= -tol) & (lam2 >= -tol) & (lam1 + lam2 <= 1.0 + tol)
    cells = np.nonzero(inside)[0]
    if not cells.size:
        raise PointOutsideMeshError(f"point {x} lies outside the mesh")
    c = int(cells[0])
    return c, np.array([lam1[c], lam2[c]])


def eval_point(space, coeffs, x, tol=1e-10):
    """Evaluate a FE field at a physical point.

    At cell interfaces of discontinuous fields the lowest-index containing
    cell wins, making the value deterministic.
    """
    c, ref = locate_point(space.mesh, x, tol=tol)
    return space.evaluate_in_cell(coeffs, c, ref[None, :])[0]


def project_jacobian(spaces, state, order=None):
    """Elementwise L2 projection of det(K_h + I) onto discontinuous P_k.

    The projection order matches the displacement-gradient order by
    default. Returns (space, coefficients, JacobianStats); the statistics
    run over all nodal values of the projected field (the coefficients of
    the nodal basis).
    """
    k = spaces.k if order is None else order
    target = build_space(spaces.mesh, "dg_scalar", k)
    rule = triangle_rule(2 * spaces.k + 3)
    f = _quad_fields(spaces, state, 2 * spaces.k + 3)
    F = f["K"] + np.eye(2)
    detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]

    vals, _ = target.ref.tabulate(rule.points)
    mass = np.einsum("q,iq,jq->ij", rule.weights, vals, vals)
    rhs = np.einsum("q,iq,cq->ci", rule.weights, vals, detF)
    coeffs = np.linalg.solve(mass, rhs.T).T.reshape(-1)
    return target, coeffs, JacobianStats.from_values(coeffs)
