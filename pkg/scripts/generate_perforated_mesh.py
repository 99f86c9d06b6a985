#!/usr/bin/env python3
"""Offline generator of the perforated-square mesh asset.

Builds an unstructured triangulation of the unit square minus eight
circular holes (four of diameter 0.2, four of diameter 0.1) by Delaunay
triangulation of a graded point cloud followed by removal of the hole
triangles, then tags the left/right edges as displacement boundary and
everything else (top/bottom and the hole rims) as traction boundary.

The committed asset targets roughly 3.3k elements. Run from the repo
root:

    python scripts/generate_perforated_mesh.py [target_h] [out_path]
"""

import sys

import numpy as np
from scipy.spatial import Delaunay

sys.path.insert(0, "src")

from ddfem.mesh import TriangleMesh, tag_boundary, write_mesh  # noqa: E402

BIG = [(0.2, 0.15), (0.25, 0.55), (0.8, 0.2), (0.8, 0.75)]
SMALL = [(0.15, 0.85), (0.45, 0.8), (0.5, 0.25), (0.6, 0.5)]
HOLES = [(np.array(c), 0.1) for c in BIG] + [(np.array(c), 0.05) for c in SMALL]


def hole_distance(points):
    """Signed distance to the nearest hole rim (negative inside a hole)."""
    d = np.full(len(points), np.inf)
    for centre, radius in HOLES:
        d = np.minimum(d, np.linalg.norm(points - centre, axis=1) - radius)
    return d


def boundary_points(h):
    pts = []
    n_side = int(round(1.0 / h))
    side = np.linspace(0.0, 1.0, n_side + 1)
    for s in side:
        pts += [(s, 0.0), (s, 1.0)]
    for s in side[1:-1]:
        pts += [(0.0, s), (1.0, s)]
    for centre, radius in HOLES:
        n_arc = max(12, int(round(2 * np.pi * radius / (0.75 * h))))
        angles = 2 * np.pi * np.arange(n_arc) / n_arc
        ring = centre + radius * np.column_stack([np.cos(angles), np.sin(angles)])
        pts += [tuple(p) for p in ring]
    return np.array(pts)


def interior_points(h, rng):
    n = int(round(1.0 / h))
    xs = (np.arange(n - 1) + 1.0) / n
    xx, yy = np.meshgrid(xs, xs)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts += rng.uniform(-0.22 * h, 0.22 * h, pts.shape)
    keep = hole_distance(pts) > 0.55 * h
    keep &= np.all((pts > 0.4 * h) & (pts < 1 - 0.4 * h), axis=1)
    return pts[keep]


def build(h, seed=7):
    rng = np.random.default_rng(seed)
    pts = np.vstack([boundary_points(h), interior_points(h, rng)])
    tri = Delaunay(pts)
    cells = tri.simplices
    centroids = pts[cells].mean(axis=1)
    cells = cells[hole_distance(centroids) > 0.0]

    # drop unreferenced points and orient CCW
    used = np.unique(cells)
    remap = -np.ones(len(pts), dtype=int)
    remap[used] = np.arange(len(used))
    cells = remap[cells]
    pts = pts[used]
    v0, v1, v2 = pts[cells[:, 0]], pts[cells[:, 1]], pts[cells[:, 2]]
    area2 = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - \
            (v1[:, 1] - v0[:, 1]) * (v2[:, 0] - v0[:, 0])
    flip = area2 < 0
    cells[flip, 1], cells[flip, 2] = cells[flip, 2], cells[flip, 1].copy()

    mesh = TriangleMesh(pts, cells)
    mesh = tag_boundary(
        mesh,
        lambda mid: "d" if (mid[0] < 1e-9 or mid[0] > 1 - 1e-9) else "t",
    )
    return mesh


def quality(mesh):
    v = mesh.vertices[mesh.cells]
    a = np.linalg.norm(v[:, 1] - v[:, 0], axis=1)
    b = np.linalg.norm(v[:, 2] - v[:, 1], axis=1)
    c = np.linalg.norm(v[:, 0] - v[:, 2], axis=1)
    s = 0.5 * (a + b + c)
    area = mesh.signed_areas
    inradius = area / s
    circum = a * b * c / (4 * area)
    return np.min(inradius / circum) * 2.0  # 1.0 for equilateral


def main():
    h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.0245
    out = sys.argv[2] if len(sys.argv) > 2 else "src/ddfem/assets/perforated_square_2d.msh"
    mesh = build(h)
    mesh.validate()
    print(f"cells: {mesh.n_cells}, vertices: {mesh.n_vertices}, "
          f"boundary loops: {len(mesh.boundary_loops())}, h: {mesh.h:.4f}, "
          f"worst quality: {quality(mesh):.3f}")
    write_mesh(mesh, out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
