"""Assembly of the four-field residual, Newton Jacobian and related systems.

Unknown blocks, in order: displacement u in discontinuous vector P_{k-1},
displacement gradient K in tensor BDM_k, stress P in tensor BDM_k with
normal traces prescribed on traction edges, pressure p in continuous P_k.
Test rows follow the same layout (v, gamma, tau, q).

Cell loops are batched with numpy over all cells; COO index arrays and
state-independent blocks are cached per discretisation, so a Newton
iteration only recomputes the state-dependent values. Assembly order is
fixed by cell ordering, making repeated assemblies bit-identical.

Constrained stress DOFs (strong tractions) are handled by symmetric
elimination: their residual rows become (value - prescribed), their matrix
rows identity, and their columns are moved to the right-hand side.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import materials as mat
from .elements import (
    ConfigurationError,
    build_space,
    cell_geometry,
    local_edge_vertices,
    ref_edge_points,
    traction_values,
)
from .mesh import DISPLACEMENT, TRACTION, rot_cw
from .quadrature import edge_rule, triangle_rule


def _zero_vector_field(points):
    return np.zeros_like(np.asarray(points, dtype=float))


@dataclass
class BoundaryData:
    """Prescribed displacement on d-edges and traction on t-edges.

    Both are callables mapping (n, 2) reference points to (n, 2) values;
    the traction is expressed in the outward unit normal convention.
    """

    ubar: object = field(default=_zero_vector_field)
    tbar: object = field(default=_zero_vector_field)


@dataclass
class SparseSystem:
    """A square sparse system ready for a direct solve."""

    matrix: sp.csc_matrix
    rhs: np.ndarray


class FourFieldSpaces:
    """The discrete spaces of one stable pair (k = 1 or 2) on a mesh."""

    def __init__(self, mesh, k):
        if k not in (1, 2):
            raise ConfigurationError(f"supported pair orders are 1 and 2, got {k}")
        self.mesh = mesh
        self.k = k
        self.u_space = build_space(mesh, "dg_vector", k - 1)
        self.K_space = build_space(mesh, "bdm_tensor", k)
        self.P_space = build_space(mesh, "bdm_tensor", k, constrain_traction=True)
        self.p_space = build_space(mesh, "cg_scalar", k)
        sizes = [self.u_space.n_dofs, self.K_space.n_dofs,
                 self.P_space.n_dofs, self.p_space.n_dofs]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.n_dofs = int(self.offsets[-1])
        self._cache = {}

    @property
    def local_dofs_per_cell(self):
        return (self.u_space.n_local + self.K_space.n_local
                + self.P_space.n_local + self.p_space.n_local)

    def constrained_rows(self):
        """Global indices of the strongly constrained stress DOFs."""
        return self.offsets[2] + self.P_space.constrained_idx

    def zero_state(self, bc=None):
        state = BlockState(self, np.zeros(self.n_dofs))
        if bc is not None:
            state.apply_traction(bc)
        return state


class BlockState:
    """Stacked coefficient vector (u, K, P, p) over a FourFieldSpaces."""

    def __init__(self, spaces, vec=None):
        self.spaces = spaces
        self.vec = np.zeros(spaces.n_dofs) if vec is None else np.asarray(vec, float)
        if self.vec.shape != (spaces.n_dofs,):
            raise ValueError("state vector length mismatch")

    def _block(self, i):
        return self.vec[self.spaces.offsets[i]:self.spaces.offsets[i + 1]]

    @property
    def u(self):
        return self._block(0)

    @property
    def K(self):
        return self._block(1)

    @property
    def P(self):
        return self._block(2)

    @property
    def p(self):
        return self._block(3)

    def copy(self):
        return BlockState(self.spaces, self.vec.copy())

    def apply_traction(self, bc):
        """Set the constrained stress coefficients to their prescribed values."""
        space = self.spaces.P_space
        if space.constrained_idx.size:
            vals = traction_values(space, bc.tbar)
            space.constrained_val = vals
            self.P[space.constrained_idx] = vals


# -- cached discretisation data ------------------------------------------------------


def _disc(spaces):
    """State-independent tabulations, geometry and COO index arrays."""
    cache = spaces._cache
    if "disc" in cache:
        return cache["disc"]

    mesh, k = spaces.mesh, spaces.k
    rule = triangle_rule(2 * k + 3)
    pts, w = rule.points, rule.weights
    nq = rule.n_points
    G, det, _ = cell_geometry(mesh)
    wdet = w[None, :] * det[:, None]  # (C, nq)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    phys = v0[:, None, :] + np.einsum("cde,qe->cqd", G, pts)

    us_vals, _ = spaces.u_space.ref.tabulate(pts)   # (nus, nq)
    ps_vals, _ = spaces.p_space.ref.tabulate(pts)   # (nps, nq)
    bdm_vals, bdm_divs = spaces.K_space.ref.tabulate(pts)
    nb = spaces.K_space.ref.ndof

    signs = spaces.K_space.cell_signs[:, :nb]  # vector-row signs, rows identical
    Vs = np.einsum("cde,iqe->ciqd", G / det[:, None, None], bdm_vals)
    Vs *= signs[:, :, None, None]
    Ds = (signs[:, :, None] / det[:, None, None]) * bdm_divs[None, :, :]

    mass = np.einsum("cq,ciqd,cjqd->cij", wdet, Vs, Vs)
    div_u = np.einsum("cq,ciq,jq->cij", wdet, Ds, us_vals)  # (C, nb, nus)

    d = {
        "rule": rule, "w": w, "nq": nq, "wdet": wdet, "phys": phys,
        "us_vals": us_vals, "ps_vals": ps_vals, "Vs": Vs, "Ds": Ds,
        "mass": mass, "div_u": div_u, "nb": nb,
        "nus": us_vals.shape[0], "nps": ps_vals.shape[0],
    }
    d.update(_build_coo_indices(spaces, d))
    d.update(_constant_block_values(spaces, d))
    cache["disc"] = d
    return d


def _pair_indices(rows_cd, cols_cd):
    """COO row/col arrays for a (cells, nR) x (cells, nC) block family."""
    r = np.repeat(rows_cd[:, :, None], cols_cd.shape[1], axis=2)
    c = np.repeat(cols_cd[:, None, :], rows_cd.shape[1], axis=1)
    return r.ravel(), c.ravel()


def _build_coo_indices(spaces, d):
    off = spaces.offsets
    dofs_u = spaces.u_space.cell_dofs + off[0]
    dofs_K = spaces.K_space.cell_dofs + off[1]
    dofs_P = spaces.P_space.cell_dofs + off[2]
    dofs_p = spaces.p_space.cell_dofs + off[3]

    blocks = {
        "vP": (dofs_u, dofs_P),
        "gK": (dofs_K, dofs_K),
        "gP": (dofs_K, dofs_P),
        "gp": (dofs_K, dofs_p),
        "tK": (dofs_P, dofs_K),
        "tu": (dofs_P, dofs_u),
        "qK": (dofs_p, dofs_K),
    }
    rows, cols, order = [], [], []
    for name, (rd, cd) in blocks.items():
        r, c = _pair_indices(rd, cd)
        rows.append(r)
        cols.append(c)
        order.append(name)
    return {
        "coo_rows": np.concatenate(rows).astype(np.int64),
        "coo_cols": np.concatenate(cols).astype(np.int64),
        "block_order": order,
        "cell_dofs": {"u": dofs_u, "K": dofs_K, "P": dofs_P, "p": dofs_p},
    }


def _constant_block_values(spaces, d):
    """Values of the state-independent Jacobian blocks."""
    nb, nus = d["nb"], d["nus"]
    C = spaces.mesh.n_cells
    mass, div_u = d["mass"], d["div_u"]

    def tensor_mass():
        out = np.zeros((C, 2 * nb, 2 * nb))
        out[:, :nb, :nb] = mass
        out[:, nb:, nb:] = mass
        return out

    # <v, div dP>: test (u node i, comp r) at local 2i+r, trial (row r', j)
    vP = np.zeros((C, 2 * nus, 2 * nb))
    for r in range(2):
        vP[:, r::2, r * nb:(r + 1) * nb] = np.swapaxes(div_u, 1, 2)
    # <div tau, du>: exact transpose
    tu = np.swapaxes(vP, 1, 2).copy()

    return {"vP_vals": vP, "tu_vals": tu, "gP_vals": tensor_mass(),
            "tK_vals": tensor_mass()}


def _edge_reference_tab(spaces, a, sign):
    """BDM reference values along local edge a sampled at the global-edge
    quadrature parameters (degree 2k + 1 boundary rule)."""
    key = ("edge_tab", a, sign)
    if key not in spaces._cache:
        rule = edge_rule(2 * spaces.k + 1)
        s = rule.points[:, 0]
        t = s if sign == 1 else 1.0 - s
        vals, _ = spaces.K_space.ref.tabulate(ref_edge_points(a, t))
        spaces._cache[key] = (rule, vals)
    return spaces._cache[key]


# -- state evaluation ----------------------------------------------------------------


def _eval_state(spaces, state, d):
    C = spaces.mesh.n_cells
    nb, nus, nps = d["nb"], d["nus"], d["nps"]
    Kc = state.K[spaces.K_space.cell_dofs].reshape(C, 2, nb)
    Pc = state.P[spaces.P_space.cell_dofs].reshape(C, 2, nb)
    uc = state.u[spaces.u_space.cell_dofs].reshape(C, nus, 2)
    pc = state.p[spaces.p_space.cell_dofs]

    K_rows = np.einsum("cri,ciqd->cqrd", Kc, d["Vs"])
    P_rows = np.einsum("cri,ciqd->cqrd", Pc, d["Vs"])
    divP = np.einsum("cri,ciq->cqr", Pc, d["Ds"])
    u_vals = np.einsum("cir,iq->cqr", uc, d["us_vals"])
    p_vals = np.einsum("ci,iq->cq", pc, d["ps_vals"])
    return K_rows, P_rows, divP, u_vals, p_vals


def _dirichlet_edge_term(spaces, bc):
    """Per-cell contributions of -<tau n, ubar> on displacement edges.

    Returns (cells, 2, nb) aligned with the tensor test layout.
    """
    mesh = spaces.mesh
    nb = spaces.K_space.ref.ndof
    G, det, _ = cell_geometry(mesh)
    signs = spaces.K_space.cell_signs[:, :nb]
    out = {}
    for e in mesh.boundary_edges:
        if mesh.boundary_tags.get(int(e)) != DISPLACEMENT:
            continue
        c, a, sgn = mesh.boundary_owner(e)
        rule, ref_vals = _edge_reference_tab(spaces, a, sgn)
        s, w = rule.points[:, 0], rule.weights
        lo, hi = mesh.vertices[mesh.edges[e]]
        x = lo + s[:, None] * (hi - lo)
        nu_out = sgn * rot_cw(hi - lo)
        vals = np.einsum("de,ine->ind", G[c] / det[c], ref_vals)
        vn = (vals @ nu_out) * signs[c][:, None]      # (nb, ns)
        ub = np.asarray(bc.ubar(x), dtype=float)      # (ns, 2)
        contrib = np.einsum("n,inr->ri", w, vn[:, :, None] * ub[None, :, :])
        out.setdefault(c, np.zeros((2, nb)))
        out[c] += contrib
    return out


def assemble_residual(spaces, state, material, bc):
    """The four block residuals; constrained rows hold (value - prescribed)."""
    d = _disc(spaces)
    mesh, off = spaces.mesh, spaces.offsets
    wdet = d["wdet"]
    K_rows, P_rows, divP, u_vals, p_vals = _eval_state(spaces, state, d)

    Q = mat.constraint_tensor(K_rows, material.constraint)
    Cval = mat.constraint_value(K_rows, material.constraint)
    M = (P_rows - mat.elastic_stress(K_rows, material.mu)
         + p_vals[:, :, None, None] * Q)

    body = material.rho0 * material.body_force_at(
        d["phys"].reshape(-1, 2)).reshape(divP.shape)

    r_v = np.einsum("cq,iq,cqr->cir", wdet, d["us_vals"], divP + body)
    r_gamma = np.einsum("cq,ciqd,cqrd->cri", wdet, d["Vs"], M)
    r_tau = (np.einsum("cq,ciqd,cqrd->cri", wdet, d["Vs"], K_rows)
             + np.einsum("cq,ciq,cqr->cri", wdet, d["Ds"], u_vals))
    r_q = np.einsum("cq,iq,cq->ci", wdet, d["ps_vals"], Cval)

    for c, contrib in _dirichlet_edge_term(spaces, bc).items():
        r_tau[c] -= contrib

    res = np.zeros(spaces.n_dofs)
    np.add.at(res, d["cell_dofs"]["u"], r_v.reshape(mesh.n_cells, -1))
    np.add.at(res, d["cell_dofs"]["K"], r_gamma.reshape(mesh.n_cells, -1))
    np.add.at(res, d["cell_dofs"]["P"], r_tau.reshape(mesh.n_cells, -1))
    np.add.at(res, d["cell_dofs"]["p"], r_q)

    cons = spaces.constrained_rows()
    res[cons] = state.vec[cons] - spaces.P_space.constrained_val
    return res


def _state_block_values(spaces, state, material, d):
    """Values of the state-dependent Jacobian blocks gK, gp, qK."""
    wdet, Vs = d["wdet"], d["Vs"]
    nb = d["nb"]
    C = spaces.mesh.n_cells
    K_rows, _, _, _, p_vals = _eval_state(spaces, state, d)

    F = K_rows + mat.IDENTITY
    detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if material.constraint == mat.C2 and np.any(detF <= 0):
        raise mat.NonpositiveJacobianError(
            f"min det(K+I) = {detF.min():.3e} at a quadrature point"
        )
    Q = mat.constraint_tensor(K_rows, material.constraint)
    QV = np.einsum("cqrd,ciqd->ciqr", Q, Vs)

    # gK: -mu mass (diagonal in rows) + p * directional derivative of Q
    gK = np.zeros((C, 2, nb, 2, nb))
    pw = wdet * p_vals
    if material.constraint == mat.C1:
        # d(cof F)[E] = cof(E) is linear in 2D: a trial row s = V_j only
        # loads the opposite test row with +-cross(V_j, V_i)
        cross = (np.einsum("cq,cjq,ciq->cij", pw, Vs[..., 0], Vs[..., 1])
                 - np.einsum("cq,cjq,ciq->cij", pw, Vs[..., 1], Vs[..., 0]))
        gK[:, 1, :, 0, :] += cross
        gK[:, 0, :, 1, :] -= cross
    else:
        # dQ2[E] = -F^{-T} E^T F^{-T}
        W = mat._inv_transpose(F)  # (C, nq, 2, 2)
        WV = np.einsum("cqrd,ciqd->ciqr", W, Vs)
        gK -= np.einsum("cq,cjqr,ciqs->crisj", pw, WV, WV)
    mass_term = np.einsum("cq,ciqd,cjqd->cij", wdet, Vs, Vs)
    for r in range(2):
        gK[:, r, :, r, :] -= material.mu * mass_term

    gp = np.einsum("cq,ciqr,jq->crij", wdet, QV, d["ps_vals"])
    qK = np.einsum("cq,jq,ciqr->cjri", wdet, d["ps_vals"], QV)

    return {
        "gK_vals": gK.reshape(C, 2 * nb, 2 * nb),
        "gp_vals": gp.reshape(C, 2 * nb, -1),
        "qK_vals": qK.reshape(C, -1, 2 * nb),
    }


def assemble_system(spaces, state, material, bc):
    """Residual and raw Jacobian triplets (constrained rows as identity).

    Returns (residual, rows, cols, vals); column elimination is left to
    the caller so finite-difference checks see the exact derivative.
    """
    d = _disc(spaces)
    res = assemble_residual(spaces, state, material, bc)
    sv = _state_block_values(spaces, state, material, d)

    pieces = []
    for name in d["block_order"]:
        pieces.append((sv if name + "_vals" in sv else d)[name + "_vals"].ravel())
    vals = np.concatenate(pieces)
    rows, cols = d["coo_rows"], d["coo_cols"]

    cons = spaces.constrained_rows()
    if cons.size:
        is_cons = np.zeros(n := spaces.n_dofs, dtype=bool)
        is_cons[cons] = True
        keep = ~is_cons[rows]
        rows = np.concatenate([rows[keep], cons])
        cols = np.concatenate([cols[keep], cons])
        vals = np.concatenate([vals[keep], np.ones(cons.size)])
    return res, rows, cols, vals


def jacobian_matrix(spaces, state, material, bc):
    """Exact Jacobian as a sparse matrix (identity rows on constraints)."""
    _, rows, cols, vals = assemble_system(spaces, state, material, bc)
    n = spaces.n_dofs
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()


def newton_system(spaces, state, material, bc):
    """Symmetric-eliminated Newton system J delta = -residual."""
    res, rows, cols, vals = assemble_system(spaces, state, material, bc)
    n = spaces.n_dofs
    rhs = -res
    cons = spaces.constrained_rows()
    if cons.size:
        delta = np.zeros(n)
        delta[cons] = rhs[cons]
        is_cons = np.zeros(n, dtype=bool)
        is_cons[cons] = True
        move = is_cons[cols] & (rows != cols)
        np.subtract.at(rhs, rows[move], vals[move] * delta[cols[move]])
        keep = ~move
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    return SparseSystem(matrix=matrix, rhs=rhs)


def linearised_system(spaces, material, bc, pressure_pin=None):
    """The linear reference-state system (Newton's first system from rest).

    Requires homogeneous traction data; solving it yields the solution of
    the linearised problem directly. When the whole boundary carries
    displacement data the pressure is determined only up to the constant
    shift (c, -c I) of (p, P); pressure_pin = (p-dof index, value) fixes
    it by replacing that DOF's row.
    """
    mesh = spaces.mesh
    t_edges = [int(e) for e in mesh.boundary_edges
               if mesh.boundary_tags.get(int(e)) == TRACTION]
    if t_edges:
        mids = mesh.edge_midpoints(np.array(t_edges))
        if np.any(np.abs(np.asarray(bc.tbar(mids))) > 0):
            raise ConfigurationError(
                "linearised system requires homogeneous traction data"
            )
    elif pressure_pin is None:
        raise ConfigurationError(
            "all-displacement boundary: pin a pressure DOF to fix the "
            "multiplier constant"
        )
    state = spaces.zero_state(bc)
    system = newton_system(spaces, state, material, bc)
    if pressure_pin is not None:
        dof, value = pressure_pin
        row = int(spaces.offsets[3] + dof)
        matrix = system.matrix.tolil()
        matrix.rows[row] = [row]
        matrix.data[row] = [1.0]
        system = SparseSystem(matrix=matrix.tocsc(), rhs=system.rhs.copy())
        system.rhs[row] = value
    return system


# -- displacement correction -----------------------------------------------------------


def correction_space(mesh, k, ubar):
    """Continuous vector Lagrange space of order k + 1 with Dirichlet data."""
    return build_space(mesh, "cg_vector", k + 1, dirichlet=ubar)


def correction_system(spaces, state, corr_space):
    """SPD system <grad w, grad v> = <K_h, grad v> with Dirichlet elimination."""
    mesh, k = spaces.mesh, spaces.k
    if not corr_space.constrained_idx.size:
        raise ConfigurationError(
            "correction space has no Dirichlet constraints (rigid modes)"
        )
    d = _disc(spaces)
    rule = d["rule"]
    G, det, GinvT = cell_geometry(mesh)
    wdet = d["wdet"]
    _, ref_grads = corr_space.ref.tabulate(rule.points)  # (ns, nq, 2)
    grads = np.einsum("cde,iqe->ciqd", GinvT, ref_grads)

    K_rows, _, _, _, _ = _eval_state(spaces, state, d)
    ns = corr_space.ref.ndof
    C = mesh.n_cells

    a_scalar = np.einsum("cq,ciqd,cjqd->cij", wdet, grads, grads)
    A_loc = np.zeros((C, 2 * ns, 2 * ns))
    for r in range(2):
        A_loc[:, r::2, r::2] = a_scalar
    b_loc = np.zeros((C, 2 * ns))
    for r in range(2):
        b_loc[:, r::2] = np.einsum("cq,cqd,ciqd->ci", wdet, K_rows[:, :, r, :], grads)

    dofs = corr_space.cell_dofs
    rows, cols = _pair_indices(dofs, dofs)
    rhs = np.zeros(corr_space.n_dofs)
    np.add.at(rhs, dofs, b_loc)

    cons = corr_space.constrained_idx
    vals_c = corr_space.constrained_val
    vals = A_loc.ravel()
    is_cons = np.zeros(corr_space.n_dofs, dtype=bool)
    is_cons[cons] = True
    delta = np.zeros(corr_space.n_dofs)
    delta[cons] = vals_c
    move = is_cons[cols] & (rows != cols)
    drop = is_cons[rows] | move
    np.subtract.at(rhs, rows[move], vals[move] * delta[cols[move]])
    rows, cols, vals = rows[~drop], cols[~drop], vals[~drop]
    rows = np.concatenate([rows, cons])
    cols = np.concatenate([cols, cons])
    vals = np.concatenate([vals, np.ones(cons.size)])
    rhs[cons] = vals_c
    n = corr_space.n_dofs
    matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    return SparseSystem(matrix=matrix, rhs=rhs)
