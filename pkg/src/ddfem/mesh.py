"""2D simplicial meshes with oriented edges and tagged boundaries.

Conventions
-----------
* Cells are counter-clockwise vertex triples.
* Local edge ``a`` of a cell runs from local vertex ``(a+1) % 3`` to
  ``(a+2) % 3`` (the edge opposite vertex ``a``).
* Every global edge is stored lo -> hi by vertex index; its normal is the
  90-degree clockwise rotation of the unit tangent. The per-cell edge sign
  is +1 when the cell's outward normal on that edge coincides with the
  global edge normal (equivalently, when the cell traverses the edge in
  the lo -> hi direction).

Meshes are immutable after construction; operations that "modify" a mesh
(mapping, retagging) return a new one.
"""

import numpy as np

DISPLACEMENT = "d"
TRACTION = "t"
_TAGS = (DISPLACEMENT, TRACTION)


class GeometryError(Exception):
    """Inverted or degenerate cell geometry."""


class MeshParseError(Exception):
    """Malformed mesh file; carries the offending line number."""


class MeshValidationError(Exception):
    """Mesh violates a connectivity or tagging invariant."""


def rot_cw(v):
    """Rotate 2-vectors 90 degrees clockwise: (x, y) -> (y, -x)."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[..., 0] = v[..., 1]
    out[..., 1] = -v[..., 0]
    return out


class TriangleMesh:
    """Immutable triangle mesh with edge orientation and boundary tags.

    Parameters
    ----------
    vertices : (V, 2) float array
    cells : (C, 3) int array, CCW triples
    boundary_tags : optional dict {edge index -> 'd' | 't'} or
        {(v0, v1) -> tag} with unordered vertex pairs. Untagged meshes are
        allowed until a solver needs the boundary.
    """

    def __init__(self, vertices, cells, boundary_tags=None, _validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be (V, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise ValueError("cells must be (C, 3)")
        self._build_connectivity()
        self._apply_tags(boundary_tags)
        if _validate:
            self.validate()
        for arr in (self.vertices, self.cells, self.edges, self.cell_edges,
                    self.cell_edge_signs):
            arr.setflags(write=False)

    # -- construction helpers -------------------------------------------------

    def _build_connectivity(self):
        verts, cells = self.vertices, self.cells
        v0 = verts[cells[:, 0]]
        e1 = verts[cells[:, 1]] - v0
        e2 = verts[cells[:, 2]] - v0
        self.signed_areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        bad = np.nonzero(self.signed_areas <= 0.0)[0]
        if bad.size:
            raise GeometryError(
                f"cell {bad[0]} has non-positive signed area "
                f"{self.signed_areas[bad[0]]:.3e}"
            )

        edge_index = {}
        edges = []
        n_cells = len(cells)
        self.cell_edges = np.empty((n_cells, 3), dtype=np.int64)
        self.cell_edge_signs = np.empty((n_cells, 3), dtype=np.int8)
        # one (cell, local edge) incidence per edge side
        incidence = []
        for c in range(n_cells):
            for a in range(3):
                va, vb = cells[c, (a + 1) % 3], cells[c, (a + 2) % 3]
                key = (va, vb) if va < vb else (vb, va)
                e = edge_index.get(key)
                if e is None:
                    e = len(edges)
                    edge_index[key] = e
                    edges.append(key)
                    incidence.append([])
                self.cell_edges[c, a] = e
                self.cell_edge_signs[c, a] = 1 if va < vb else -1
                incidence[e].append((c, a))
        self.edges = np.array(edges, dtype=np.int64)
        self._edge_cells = incidence
        counts = np.array([len(inc) for inc in incidence])
        if counts.max(initial=0) > 2:
            raise MeshValidationError("non-manifold edge (more than two cells)")
        self.boundary_edges = np.nonzero(counts == 1)[0]
        self.h = float(
            np.max(np.linalg.norm(
                verts[self.edges[:, 1]] - verts[self.edges[:, 0]], axis=1))
        ) if len(self.edges) else 0.0

    def _apply_tags(self, boundary_tags):
        self.boundary_tags = {}
        if boundary_tags is None:
            return
        pair_to_edge = {tuple(e): i for i, e in enumerate(self.edges)}
        for key, tag in boundary_tags.items():
            if tag not in _TAGS:
                raise MeshValidationError(f"unknown boundary tag {tag!r}")
            if isinstance(key, tuple):
                pair = tuple(sorted(key))
                if pair not in pair_to_edge:
                    raise MeshValidationError(f"tagged pair {key} is not an edge")
                e = pair_to_edge[pair]
            else:
                e = int(key)
            self.boundary_tags[e] = tag

    # -- queries ---------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_cells(self, e):
        """(cell, local edge) incidences of edge e; one entry on the boundary."""
        return tuple(self._edge_cells[e])

    def boundary_owner(self, e):
        """Owning (cell, local edge, sign) of a boundary edge."""
        (c, a), = self._edge_cells[e]
        return c, a, int(self.cell_edge_signs[c, a])

    def edge_midpoints(self, edges=None):
        e = self.edges if edges is None else self.edges[edges]
        return 0.5 * (self.vertices[e[:, 0]] + self.vertices[e[:, 1]])

    def edge_lengths(self, edges=None):
        e = self.edges if edges is None else self.edges[edges]
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def boundary_loops(self):
        """Boundary loops as lists of directed edge indices.

        Each boundary edge is traversed in its owning cell's CCW direction,
        so the outer loop is CCW and hole loops are CW.
        """
        start_of = {}
        for e in self.boundary_edges:
            c, a, sign = self.boundary_owner(e)
            va = self.cells[c, (a + 1) % 3]
            start_of[va] = e
        loops = []
        seen = set()
        for e0 in self.boundary_edges:
            if e0 in seen:
                continue
            loop, e = [], e0
            while True:
                loop.append(e)
                seen.add(e)
                c, a, sign = self.boundary_owner(e)
                vb = self.cells[c, (a + 2) % 3]
                e = start_of.get(int(vb))
                if e is None:
                    raise MeshValidationError("open boundary loop")
                if e == e0:
                    break
            loops.append(loop)
        return loops

    def boundary_polygon_area(self):
        """Shoelace area of the boundary loops (holes count negatively)."""
        total = 0.0
        for loop in self.boundary_loops():
            for e in loop:
                c, a, _ = self.boundary_owner(e)
                p = self.vertices[self.cells[c, (a + 1) % 3]]
                q = self.vertices[self.cells[c, (a + 2) % 3]]
                total += 0.5 * (p[0] * q[1] - p[1] * q[0])
        return total

    def n_holes(self):
        return len(self.boundary_loops()) - 1

    # -- invariants --------------------------------------------------------------

    def validate(self):
        """Check orientation, incidence, Euler characteristic and area closure."""
        for e, inc in enumerate(self._edge_cells):
            if len(inc) == 2:
                (c1, a1), (c2, a2) = inc
                if self.cell_edge_signs[c1, a1] == self.cell_edge_signs[c2, a2]:
                    raise MeshValidationError(
                        f"interior edge {e} has equal signs from cells {c1}, {c2}"
                    )
        if self.boundary_tags:
            untagged = [e for e in self.boundary_edges if e not in self.boundary_tags]
            if untagged:
                raise MeshValidationError(
                    f"boundary edge {untagged[0]} is untagged"
                )
            interior_tagged = set(self.boundary_tags) - set(map(int, self.boundary_edges))
            if interior_tagged:
                raise MeshValidationError(
                    f"interior edge {min(interior_tagged)} carries a boundary tag"
                )
        euler = self.n_vertices - self.n_edges + self.n_cells
        if euler != 1 - self.n_holes():
            raise MeshValidationError(
                f"Euler characteristic {euler} != 1 - holes ({self.n_holes()})"
            )
        cell_area = float(self.signed_areas.sum())
        loop_area = self.boundary_polygon_area()
        if abs(cell_area - loop_area) > 1e-12 * max(1.0, abs(loop_area)):
            raise MeshValidationError(
                f"cell area sum {cell_area!r} != boundary polygon area {loop_area!r}"
            )

    def with_tags(self, boundary_tags):
        return TriangleMesh(self.vertices, self.cells, boundary_tags)


# -- constructors ----------------------------------------------------------------


def structured_square_mesh(n, diagonal="lower-left-to-upper-right"):
    """Uniform triangulation of the unit square with 2 n^2 CCW cells."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if diagonal not in ("lower-left-to-upper-right", "upper-left-to-lower-right"):
        raise ValueError(f"unknown diagonal {diagonal!r}")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    cells = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if diagonal == "lower-left-to-upper-right":
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
            else:
                cells.append((v00, v10, v01))
                cells.append((v10, v11, v01))
    return TriangleMesh(vertices, np.array(cells))


def map_mesh(mesh, phi):
    """Apply a coordinate map vertex-wise, preserving connectivity and tags.

    phi takes an (n, 2) array and returns (n, 2). Raises GeometryError if
    any mapped cell inverts.
    """
    new_vertices = np.asarray(phi(mesh.vertices), dtype=float)
    if new_vertices.shape != mesh.vertices.shape:
        raise ValueError("map must return one 2D point per vertex")
    return TriangleMesh(new_vertices, mesh.cells, dict(mesh.boundary_tags) or None)


def tag_boundary(mesh, predicate):
    """Tag every boundary edge by a predicate on its midpoint.

    predicate(midpoint) must return 'd' or 't' for every boundary-edge
    midpoint; interior edges are untouched.
    """
    mids = mesh.edge_midpoints(mesh.boundary_edges)
    tags = {}
    for e, mid in zip(mesh.boundary_edges, mids):
        tag = predicate(mid)
        if tag not in _TAGS:
            raise MeshValidationError(f"predicate returned invalid tag {tag!r}")
        tags[int(e)] = tag
    return mesh.with_tags(tags)


# -- file I/O ---------------------------------------------------------------------

_FORMAT_HEADER = "trimesh 2"


def write_mesh(mesh, path):
    """Write the ASCII mesh format (see read_mesh). Requires tagged boundary."""
    lines = [_FORMAT_HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines.append(f"cells {mesh.n_cells}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.cells]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for e in mesh.boundary_edges:
        tag = mesh.boundary_tags.get(int(e))
        if tag is None:
            raise MeshValidationError(f"cannot write untagged boundary edge {e}")
        v0, v1 = mesh.edges[e]
        lines.append(f"{v0} {v1} {tag}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read the ASCII mesh format:

    header ``trimesh 2``, then ``vertices N`` followed by N ``x y`` lines,
    ``cells M`` followed by M ``v0 v1 v2`` lines, and ``boundary B``
    followed by B ``v0 v1 tag`` lines with tag in {d, t}.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()

    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshParseError(f"{path}:{len(lines)}: unexpected end of file")
        pos += 1
        return pos, lines[pos - 1].split()

    ln, tok = next_line()
    if " ".join(tok) != _FORMAT_HEADER:
        raise MeshParseError(f"{path}:{ln}: expected header {_FORMAT_HEADER!r}")

    def read_count(keyword):
        ln, tok = next_line()
        if len(tok) != 2 or tok[0] != keyword:
            raise MeshParseError(f"{path}:{ln}: expected '{keyword} <count>'")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshParseError(f"{path}:{ln}: bad count {tok[1]!r}") from None

    nv = read_count("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        ln, tok = next_line()
        try:
            vertices[i] = [float(tok[0]), float(tok[1])]
        except (ValueError, IndexError):
            raise MeshParseError(f"{path}:{ln}: bad vertex line") from None

    nc = read_count("cells")
    cells = np.empty((nc, 3), dtype=np.int64)
    for i in range(nc):
        ln, tok = next_line()
        try:
            cells[i] = [int(tok[0]), int(tok[1]), int(tok[2])]
        except (ValueError, IndexError):
            raise MeshParseError(f"{path}:{ln}: bad cell line") from None

    nb = read_count("boundary")
    tags = {}
    for i in range(nb):
        ln, tok = next_line()
        if len(tok) != 3 or tok[2] not in _TAGS:
            raise MeshParseError(f"{path}:{ln}: bad boundary line")
        try:
            pair = (int(tok[0]), int(tok[1]))
        except ValueError:
            raise MeshParseError(f"{path}:{ln}: bad boundary vertices") from None
        tags[pair] = tok[2]

    mesh = TriangleMesh(vertices, cells, tags)
    untagged = [e for e in mesh.boundary_edges if int(e) not in mesh.boundary_tags]
    if untagged:
        raise MeshValidationError(
            f"{path}: boundary edge {untagged[0]} not tagged in file"
        )
    return mesh


# -- benchmark geometry maps -------------------------------------------------------


def quarter_annulus_map(points):
    """Map [0, 0.5]^2 onto the first-quadrant quarter of the annulus
    with inner radius 0.5 and outer radius 1: radius 0.5 + s, angle pi * t."""
    pts = np.asarray(points, dtype=float)
    radius = 0.5 + pts[..., 0]
    angle = np.pi * pts[..., 1]
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def cook_membrane_map(points):
    """Bilinear map of the unit square onto the Cook membrane with corners
    (0,0), (48,44), (48,60), (0,44)."""
    pts = np.asarray(points, dtype=float)
    s, t = pts[..., 0], pts[..., 1]
    return np.stack([48.0 * s, 44.0 * t + s * (44.0 - 28.0 * t)], axis=-1)
