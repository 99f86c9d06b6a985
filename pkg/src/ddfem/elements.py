"""Reference bases and global finite element spaces.

Families
--------
* Continuous/discontinuous Lagrange (scalar and 2-vector), orders 0..3.
* Vector- and tensor-valued BDM of order 1 and 2, H(div)-conforming via
  the contravariant Piola transform. A tensor field is two independent
  vector rows; row i of T n is the normal trace of row i.

BDM degrees of freedom are normal-component moments against the Lagrange
basis of the k+1 Gauss points of each edge (plus, for k = 2, interior
moments against the lowest first-kind Nedelec space). Edge moments are
taken in the global lo -> hi edge parametrisation, so a cell whose local
traversal opposes the global orientation sees its j-th edge moment as
minus the (k - j)-th local one: the cell-to-global DOF map is a signed
permutation and interior-edge DOFs always carry opposite signs from their
two cells.
"""

from functools import lru_cache

import numpy as np

from .mesh import DISPLACEMENT, TRACTION, rot_cw
from .quadrature import edge_rule, triangle_rule

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class UnsupportedElementError(ValueError):
    pass


class ConfigurationError(Exception):
    """Boundary data requested on a mesh without matching tags."""


def _monomial_exponents(k):
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def _mono_values(exps, points):
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return np.array([x**a * y**b for a, b in exps])


def _mono_grads(exps, points):
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((len(exps), len(pts), 2))
    for i, (a, b) in enumerate(exps):
        if a > 0:
            out[i, :, 0] = a * x ** (a - 1) * y**b
        if b > 0:
            out[i, :, 1] = b * x**a * y ** (b - 1)
    return out


def local_edge_vertices(a):
    """Local vertex indices (start, end) of reference edge a (opposite vertex a)."""
    return (a + 1) % 3, (a + 2) % 3


def ref_edge_points(a, s):
    """Points on reference edge a at traversal parameters s in [0, 1]."""
    va, vb = local_edge_vertices(a)
    p0, p1 = REF_VERTICES[va], REF_VERTICES[vb]
    s = np.asarray(s, dtype=float).reshape(-1, 1)
    return p0 + s * (p1 - p0)


class LagrangeReference:
    """Nodal scalar Lagrange basis on the reference triangle, order 0..3.

    Node order: vertices, then per-edge nodes in local traversal order,
    then the interior node (k = 3).
    """

    def __init__(self, k):
        if k not in (0, 1, 2, 3):
            raise UnsupportedElementError(f"Lagrange order {k} unsupported")
        self.k = k
        self.exps = _monomial_exponents(k)
        self.nodes = self._node_points(k)
        self.ndof = len(self.nodes)
        vander = _mono_values(self.exps, self.nodes).T
        self.coeffs = np.linalg.inv(vander)  # (n_mono, ndof)
        self.n_edge_nodes = {0: 0, 1: 0, 2: 1, 3: 2}[k]

    @staticmethod
    def _node_points(k):
        if k == 0:
            return np.array([[1 / 3, 1 / 3]])
        nodes = [REF_VERTICES[i] for i in range(3)]
        if k >= 2:
            params = {2: [0.5], 3: [1 / 3, 2 / 3]}[k]
            for a in range(3):
                nodes.extend(ref_edge_points(a, params))
        if k == 3:
            nodes.append(np.array([1 / 3, 1 / 3]))
        return np.vstack(nodes)

    def tabulate(self, points):
        """Values (ndof, n) and reference gradients (ndof, n, 2) at points."""
        vals = self.coeffs.T @ _mono_values(self.exps, points)
        grads = np.einsum("md,mnc->dnc", self.coeffs, _mono_grads(self.exps, points))
        return vals, grads


class BDMReference:
    """Vector BDM basis of order k on the reference triangle, built by
    inverting the moment matrix of a monomial basis of P_k^2."""

    def __init__(self, k):
        if k not in (1, 2):
            raise UnsupportedElementError(f"BDM order {k} unsupported")
        self.k = k
        self.exps = _monomial_exponents(k)
        self.n_mono = len(self.exps)
        self.ndof = 2 * self.n_mono  # dim P_k^2 = (k+1)(k+2)
        self.n_edge_dofs = k + 1
        self.n_interior = self.ndof - 3 * self.n_edge_dofs

        gauss = edge_rule(2 * k + 1)
        self.edge_param_points = gauss.points[:, 0]  # k+1 Gauss points on [0,1]
        self._dof_rule = edge_rule(2 * k + 2)
        self._tri_rule = triangle_rule(2 * k + 2)
        self.coeffs = np.linalg.inv(self._moment_matrix())  # (ndof, ndof)

    # vector monomial b: component b % 2 carries monomial b // 2
    def _vec_mono_values(self, points):
        mono = _mono_values(self.exps, points)  # (n_mono, n)
        out = np.zeros((self.ndof, len(mono[0]), 2))
        out[0::2, :, 0] = mono
        out[1::2, :, 1] = mono
        return out

    def _vec_mono_divs(self, points):
        grads = _mono_grads(self.exps, points)  # (n_mono, n, 2)
        out = np.zeros((self.ndof, grads.shape[1]))
        out[0::2] = grads[:, :, 0]
        out[1::2] = grads[:, :, 1]
        return out

    def edge_lagrange(self, s):
        """Lagrange basis of the edge Gauss points evaluated at s: (k+1, n)."""
        g = self.edge_param_points
        s = np.asarray(s, dtype=float)
        out = np.ones((len(g), len(s)))
        for j, gj in enumerate(g):
            for m, gm in enumerate(g):
                if m != j:
                    out[j] *= (s - gm) / (gj - gm)
        return out

    def interior_test_fields(self, points):
        """Lowest first-kind Nedelec fields [(1,0), (0,1), (-y, x)]: (3, n, 2)."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros((3, len(pts), 2))
        out[0, :, 0] = 1.0
        out[1, :, 1] = 1.0
        out[2, :, 0] = -pts[:, 1]
        out[2, :, 1] = pts[:, 0]
        return out

    def apply_dofs(self, values_at):
        """DOF functionals applied to a callable points -> (n, 2).

        Edge DOFs (a, j) are moments of v . nu_a against the Gauss-point
        Lagrange basis in the local traversal parameter, with nu_a the
        outward rot_cw-scaled edge vector; interior DOFs are moments
        against the Nedelec fields.
        """
        out = np.empty(self.ndof)
        s = self._dof_rule.points[:, 0]
        w = self._dof_rule.weights
        ell = self.edge_lagrange(s)
        d = 0
        for a in range(3):
            va, vb = local_edge_vertices(a)
            nu = rot_cw(REF_VERTICES[vb] - REF_VERTICES[va])
            vals = np.asarray(values_at(ref_edge_points(a, s)))
            vn = vals @ nu
            for j in range(self.n_edge_dofs):
                out[d] = np.sum(w * vn * ell[j])
                d += 1
        if self.n_interior:
            pts, wts = self._tri_rule.points, self._tri_rule.weights
            vals = np.asarray(values_at(pts))
            tests = self.interior_test_fields(pts)
            for i in range(3):
                out[d] = np.einsum("n,nc,nc->", wts, vals, tests[i])
                d += 1
        return out

    def _moment_matrix(self):
        mat = np.empty((self.ndof, self.ndof))
        for b in range(self.ndof):
            mat[:, b] = self.apply_dofs(
                lambda pts, b=b: self._vec_mono_values(pts)[b]
            )
        return mat

    def tabulate(self, points):
        """Values (ndof, n, 2) and divergences (ndof, n) at reference points."""
        vals = np.einsum("bd,bnc->dnc", self.coeffs, self._vec_mono_values(points))
        divs = self.coeffs.T @ self._vec_mono_divs(points)
        return vals, divs


@lru_cache(maxsize=None)
def reference_basis(family, k):
    """Reference basis for family in {lagrange, bdm} at order k."""
    if family == "lagrange":
        return LagrangeReference(k)
    if family == "bdm":
        return BDMReference(k)
    raise UnsupportedElementError(f"unknown family {family!r}")


def piola_push(G, det_G, ref_values, ref_divs):
    """Contravariant Piola transform of reference values and divergences.

    v(x) = G v_ref / det G and div v(x) = div_ref / det G for the affine
    cell map x = G x_ref + c. Leading axes of G broadcast against the
    value arrays; raises on inverted cells.
    """
    det_G = np.asarray(det_G, dtype=float)
    if np.any(det_G <= 0):
        raise ValueError("Piola transform requires det G > 0 (inverted cell)")
    vals = np.einsum("...de,...e->...d", G, ref_values) / det_G[..., None]
    divs = ref_divs / det_G
    return vals, divs


def cell_geometry(mesh):
    """Affine maps of all cells: G (C,2,2), det G (C,), inverse transpose.

    Cached on the mesh (meshes are immutable after construction).
    """
    cached = getattr(mesh, "_geometry_cache", None)
    if cached is not None:
        return cached
    v = mesh.vertices[mesh.cells]
    G = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] * G[:, 1, 0]
    inv = np.empty_like(G)
    inv[:, 0, 0] = G[:, 1, 1]
    inv[:, 0, 1] = -G[:, 0, 1]
    inv[:, 1, 0] = -G[:, 1, 0]
    inv[:, 1, 1] = G[:, 0, 0]
    inv /= det[:, None, None]
    result = (G, det, np.swapaxes(inv, 1, 2))
    mesh._geometry_cache = result
    return result


class FESpace:
    """A global FE space over a mesh.

    kind is one of 'cg_scalar', 'cg_vector', 'dg_scalar', 'dg_vector',
    'bdm_vector', 'bdm_tensor'. cell_dofs maps (cell, local dof) to global
    indices and cell_signs to the matching orientation factors (+-1;
    always +1 for Lagrange kinds). Strong boundary conditions populate
    constrained_idx / constrained_val.
    """

    def __init__(self, mesh, kind, degree):
        self.mesh = mesh
        self.kind = kind
        self.degree = degree
        self.ncomp = 2 if kind.endswith(("vector", "tensor")) else 1
        family = "bdm" if kind.startswith("bdm") else "lagrange"
        self.ref = reference_basis(family, degree)
        self.constrained_idx = np.empty(0, dtype=np.int64)
        self.constrained_val = np.empty(0)

    @property
    def n_local(self):
        return self.cell_dofs.shape[1]

    def zeros(self):
        return np.zeros(self.n_dofs)

    # -- evaluation -------------------------------------------------------------

    def evaluate_in_cell(self, coeffs, c, ref_points):
        """Field values at reference points of cell c.

        Returns (n,) for scalar, (n, 2) for vector, (n, 2, 2) for tensor
        kinds (tensor rows stacked along axis 1).
        """
        dofs = self.cell_dofs[c]
        local = coeffs[dofs] * self.cell_signs[c]
        if self.kind.startswith(("cg", "dg")):
            vals, _ = self.ref.tabulate(ref_points)
            if self.ncomp == 1:
                return local @ vals
            return np.stack(
                [local[r::2] @ vals for r in range(2)], axis=-1
            )
        G, det, _ = cell_geometry(self.mesh)
        rvals, rdivs = self.ref.tabulate(ref_points)
        vals, _ = piola_push(G[c], det[c], rvals, rdivs)
        if self.kind == "bdm_vector":
            return np.einsum("d,dnc->nc", local, vals)
        nvec = self.ref.ndof
        return np.stack(
            [np.einsum("d,dnc->nc", local[r * nvec:(r + 1) * nvec], vals)
             for r in range(2)], axis=1
        )


def _lagrange_numbering(mesh, k):
    """Global numbering and node coordinates for continuous scalar P_k."""
    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    per_edge = {1: 0, 2: 1, 3: 2}[k]
    n_dofs = nv + per_edge * ne + (1 if k == 3 else 0) * nc
    ref = reference_basis("lagrange", k)
    nloc = ref.ndof
    cell_dofs = np.empty((nc, nloc), dtype=np.int64)
    cell_dofs[:, :3] = mesh.cells
    if per_edge:
        for a in range(3):
            e = mesh.cell_edges[:, a]
            sgn = mesh.cell_edge_signs[:, a]
            for j in range(per_edge):
                # edge nodes are numbered along the global lo->hi direction
                gj = np.where(sgn == 1, j, per_edge - 1 - j)
                cell_dofs[:, 3 + a * per_edge + j] = nv + e * per_edge + gj
    if k == 3:
        cell_dofs[:, -1] = nv + per_edge * ne + np.arange(nc)

    points = np.empty((n_dofs, 2))
    points[:nv] = mesh.vertices
    if per_edge:
        lo = mesh.vertices[mesh.edges[:, 0]]
        hi = mesh.vertices[mesh.edges[:, 1]]
        params = {1: [0.5], 2: [1 / 3, 2 / 3]}[per_edge]
        for j, t in enumerate(params):
            points[nv + j::per_edge][:ne] = lo + t * (hi - lo)
    if k == 3:
        points[nv + per_edge * ne:] = mesh.vertices[mesh.cells].mean(axis=1)
    return n_dofs, cell_dofs, points


def _boundary_nodes(mesh, k, tag):
    """Global scalar Lagrange node indices lying on edges with the given tag."""
    nv = mesh.n_vertices
    per_edge = {1: 0, 2: 1, 3: 2}[k]
    nodes = set()
    for e in mesh.boundary_edges:
        if mesh.boundary_tags.get(int(e)) != tag:
            continue
        nodes.update(int(v) for v in mesh.edges[e])
        nodes.update(nv + int(e) * per_edge + j for j in range(per_edge))
    return np.array(sorted(nodes), dtype=np.int64)


def build_space(mesh, kind, degree, dirichlet=None, constrain_traction=False):
    """Build a global FE space, optionally with strong boundary conditions.

    dirichlet : callable points -> values; constrains Lagrange nodes on
        displacement-tagged edges (cg kinds only).
    constrain_traction : reserve the normal-trace DOFs on traction-tagged
        edges of a bdm_tensor space; values are set later through
        ``traction_values``.
    """
    if (dirichlet is not None or constrain_traction) and not mesh.boundary_tags:
        raise ConfigurationError("boundary data requested on an untagged mesh")

    space = FESpace(mesh, kind, degree)
    nc = mesh.n_cells

    if kind in ("cg_scalar", "cg_vector"):
        n_scalar, scalar_dofs, points = _lagrange_numbering(mesh, degree)
        space.dof_points = points
        if kind == "cg_scalar":
            space.n_dofs = n_scalar
            space.cell_dofs = scalar_dofs
        else:
            space.n_dofs = 2 * n_scalar
            nloc = scalar_dofs.shape[1]
            cd = np.empty((nc, 2 * nloc), dtype=np.int64)
            cd[:, 0::2] = 2 * scalar_dofs
            cd[:, 1::2] = 2 * scalar_dofs + 1
            space.cell_dofs = cd
        space.cell_signs = np.ones_like(space.cell_dofs, dtype=float)
        if dirichlet is not None:
            nodes = _boundary_nodes(mesh, degree, DISPLACEMENT)
            vals = np.asarray(dirichlet(points[nodes]), dtype=float)
            if kind == "cg_scalar":
                space.constrained_idx = nodes
                space.constrained_val = vals.reshape(-1)
            elif nodes.size:
                space.constrained_idx = np.concatenate([2 * nodes, 2 * nodes + 1])
                space.constrained_val = np.concatenate([vals[:, 0], vals[:, 1]])
        return space

    if kind in ("dg_scalar", "dg_vector"):
        nloc_s = space.ref.ndof
        if kind == "dg_scalar":
            space.n_dofs = nc * nloc_s
            space.cell_dofs = (
                np.arange(nc)[:, None] * nloc_s + np.arange(nloc_s)[None, :]
            )
        else:
            space.n_dofs = nc * 2 * nloc_s
            base = np.arange(nc)[:, None] * 2 * nloc_s
            space.cell_dofs = base + np.arange(2 * nloc_s)[None, :]
        space.cell_signs = np.ones_like(space.cell_dofs, dtype=float)
        return space

    if kind in ("bdm_vector", "bdm_tensor"):
        k = degree
        ref = space.ref
        ned, nint = ref.n_edge_dofs, ref.n_interior
        n_vec = mesh.n_edges * ned + nc * nint
        vec_dofs = np.empty((nc, ref.ndof), dtype=np.int64)
        vec_signs = np.empty((nc, ref.ndof))
        for a in range(3):
            e = mesh.cell_edges[:, a]
            sgn = mesh.cell_edge_signs[:, a]
            for j in range(ned):
                gj = np.where(sgn == 1, j, ned - 1 - j)
                vec_dofs[:, a * ned + j] = e * ned + gj
                vec_signs[:, a * ned + j] = sgn
        for i in range(nint):
            vec_dofs[:, 3 * ned + i] = mesh.n_edges * ned + np.arange(nc) * nint + i
            vec_signs[:, 3 * ned + i] = 1.0

        if kind == "bdm_vector":
            space.n_dofs = n_vec
            space.cell_dofs = vec_dofs
            space.cell_signs = vec_signs
        else:
            space.n_dofs = 2 * n_vec
            space.n_vec_dofs = n_vec
            space.cell_dofs = np.concatenate([vec_dofs, vec_dofs + n_vec], axis=1)
            space.cell_signs = np.concatenate([vec_signs, vec_signs], axis=1)
            if constrain_traction:
                t_edges = [int(e) for e in mesh.boundary_edges
                           if mesh.boundary_tags.get(int(e)) == TRACTION]
                idx = []
                for e in t_edges:
                    for r in range(2):
                        idx.extend(r * n_vec + e * ned + j for j in range(ned))
                space.constrained_idx = np.array(sorted(idx), dtype=np.int64)
                space.constrained_val = np.zeros(len(space.constrained_idx))
                space._traction_edges = t_edges
        return space

    raise UnsupportedElementError(f"unknown space kind {kind!r}")


def traction_values(space, tbar, quad_degree=9):
    """Prescribed DOF values enforcing P n = tbar on traction-tagged edges.

    tbar : callable points -> (n, 2) traction in the outward unit normal
    convention; a callable with a truthy ``needs_normal`` attribute is
    instead called as tbar(points, outward_unit_normal) per edge. Returns
    values aligned with space.constrained_idx.
    """
    mesh, ref = space.mesh, space.ref
    ned, n_vec = ref.n_edge_dofs, space.n_vec_dofs
    rule = edge_rule(quad_degree)
    s, w = rule.points[:, 0], rule.weights
    ell = ref.edge_lagrange(s)
    needs_normal = getattr(tbar, "needs_normal", False)
    values = np.zeros(space.n_dofs)
    for e in space._traction_edges:
        lo, hi = mesh.vertices[mesh.edges[e]]
        _, _, sign = mesh.boundary_owner(e)
        length = np.linalg.norm(hi - lo)
        pts = lo + s[:, None] * (hi - lo)
        if needs_normal:
            n_out = sign * rot_cw(hi - lo) / length
            tvals = np.asarray(tbar(pts, n_out), dtype=float)
        else:
            tvals = np.asarray(tbar(pts), dtype=float)
        for r in range(2):
            for j in range(ned):
                values[r * n_vec + e * ned + j] = (
                    sign * length * np.sum(w * tvals[:, r] * ell[j])
                )
    return values[space.constrained_idx]


# -- canonical interpolation --------------------------------------------------------


def _interpolate_bdm_vector(space, field):
    mesh, ref = space.mesh, space.ref
    k, ned = space.degree, ref.n_edge_dofs
    coeffs = np.zeros(mesh.n_edges * ned + mesh.n_cells * ref.n_interior)

    rule = edge_rule(max(2 * k + 2, 9))
    s, w = rule.points[:, 0], rule.weights
    ell = ref.edge_lagrange(s)
    lo = mesh.vertices[mesh.edges[:, 0]]
    hi = mesh.vertices[mesh.edges[:, 1]]
    nu = rot_cw(hi - lo)
    for e in range(mesh.n_edges):
        pts = lo[e] + s[:, None] * (hi[e] - lo[e])
        vn = np.asarray(field(pts), dtype=float) @ nu[e]
        coeffs[e * ned:(e + 1) * ned] = ell @ (w * vn)

    if ref.n_interior:
        tri = triangle_rule(2 * k + 4)
        pts, wts = tri.points, tri.weights
        tests = ref.interior_test_fields(pts)
        G, det, _ = cell_geometry(mesh)
        Ginv = np.linalg.inv(G)
        base = mesh.n_edges * ned
        for c in range(mesh.n_cells):
            phys = mesh.vertices[mesh.cells[c, 0]] + pts @ G[c].T
            vhat = det[c] * np.asarray(field(phys), dtype=float) @ Ginv[c].T
            coeffs[base + 3 * c: base + 3 * c + 3] = np.einsum(
                "n,nc,inc->i", wts, vhat, tests
            )
    return coeffs


def _project_dg(space, field):
    mesh, ref = space.mesh, space.ref
    k = space.degree
    tri = triangle_rule(max(2 * k + 4, 6))
    vals, _ = ref.tabulate(tri.points)  # (nloc, nq)
    mass = np.einsum("q,iq,jq->ij", tri.weights, vals, vals)
    G, det, _ = cell_geometry(mesh)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    phys = v0[:, None, :] + np.einsum("cde,qe->cqd", G, tri.points)
    fvals = np.asarray(field(phys.reshape(-1, 2)), dtype=float)
    solve = np.linalg.solve
    coeffs = np.zeros(space.n_dofs)
    if space.kind == "dg_scalar":
        rhs = np.einsum("q,iq,cq->ci", tri.weights, vals,
                        fvals.reshape(mesh.n_cells, -1))
        coeffs = solve(mass, rhs.T).T.reshape(-1)
    else:
        fv = fvals.reshape(mesh.n_cells, -1, 2)
        for r in range(2):
            rhs = np.einsum("q,iq,cq->ci", tri.weights, vals, fv[:, :, r])
            sol = solve(mass, rhs.T).T  # (C, nloc)
            coeffs.reshape(mesh.n_cells, -1)[:, r::2] = sol
    return coeffs


def interpolate(space, field):
    """Canonical interpolation: DOF functionals applied to a field.

    Lagrange spaces use nodal evaluation, DG spaces the cellwise L2
    projection, BDM spaces the edge/interior moments (so the divergence
    of the tensor interpolant commutes with the vector DG projection of
    the divergence).
    """
    kind = space.kind
    if kind == "cg_scalar":
        return np.asarray(field(space.dof_points), dtype=float)
    if kind == "cg_vector":
        vals = np.asarray(field(space.dof_points), dtype=float)
        return vals.reshape(-1)
    if kind in ("dg_scalar", "dg_vector"):
        return _project_dg(space, field)
    if kind == "bdm_vector":
        return _interpolate_bdm_vector(space, field)
    if kind == "bdm_tensor":
        rows = [
            _interpolate_bdm_vector(
                space, lambda pts, r=r: np.asarray(field(pts))[:, r, :]
            )
            for r in range(2)
        ]
        return np.concatenate(rows)
    raise UnsupportedElementError(f"cannot interpolate into {kind!r}")
