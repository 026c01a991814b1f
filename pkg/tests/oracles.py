"""Independent brute-force oracles used to validate the accelerated paths.

These deliberately use different algorithms (or no acceleration) so agreement
is meaningful: plane/edge decomposition for point-triangle distance, solid
angles for the winding number, shifted-OR morphology, and all-pairs loops.
"""

from __future__ import annotations

import numpy as np


def point_triangle_distance_reference(p, a, b, c) -> float:
    """Min distance via plane projection + the three edge segments."""
    p, a, b, c = (np.asarray(v, dtype=np.float64) for v in (p, a, b, c))
    n = np.cross(b - a, c - a)
    nn = np.dot(n, n)
    best = np.inf
    if nn > 0:
        # barycentric coordinates of the in-plane projection
        q = p - n * (np.dot(p - a, n) / nn)
        w = np.cross(b - a, q - a)
        u = np.cross(q - b, c - b)
        v = np.cross(c - a, q - a)
        if np.dot(u, n) >= 0 and np.dot(v, n) >= 0 and np.dot(w, n) >= 0:
            best = abs(np.dot(p - a, n)) / np.sqrt(nn)

    def seg_dist(s0, s1):
        d = s1 - s0
        t = np.dot(p - s0, d) / np.dot(d, d)
        t = min(1.0, max(0.0, t))
        return np.linalg.norm(p - (s0 + t * d))

    return min(best, seg_dist(a, b), seg_dist(b, c), seg_dist(c, a))


def mesh_distance_reference(points, vertices, triangles) -> np.ndarray:
    """All-pairs min point-to-triangle distance (no acceleration)."""
    out = np.empty(len(points))
    tri = np.asarray(vertices)[np.asarray(triangles)]
    for i, p in enumerate(points):
        out[i] = min(point_triangle_distance_reference(p, *t) for t in tri)
    return out


def winding_number_reference(points, vertices, triangles) -> np.ndarray:
    """Generalized winding number by summing signed solid angles."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    tri = np.asarray(vertices)[np.asarray(triangles)]
    w = np.zeros(len(points))
    for t in tri:
        a = t[0] - points
        b = t[1] - points
        c = t[2] - points
        la = np.linalg.norm(a, axis=1)
        lb = np.linalg.norm(b, axis=1)
        lc = np.linalg.norm(c, axis=1)
        num = np.einsum("ij,ij->i", a, np.cross(b, c))
        den = (
            la * lb * lc
            + np.einsum("ij,ij->i", a, b) * lc
            + np.einsum("ij,ij->i", b, c) * la
            + np.einsum("ij,ij->i", c, a) * lb
        )
        w += 2.0 * np.arctan2(num, den)
    return w / (4.0 * np.pi)


def closing_reference(mask: np.ndarray, radius: int) -> np.ndarray:
    """Chebyshev-ball closing by explicit shifted ORs/ANDs on a padded grid."""
    pad = radius
    work = np.pad(mask.astype(bool), pad)

    def cheb_dilate(m):
        out = np.zeros_like(m)
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                for dz in range(-radius, radius + 1):
                    out |= np.roll(np.roll(np.roll(m, dx, 0), dy, 1), dz, 2)
        return out

    def cheb_erode(m):
        out = np.ones_like(m)
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                for dz in range(-radius, radius + 1):
                    out &= np.roll(np.roll(np.roll(m, dx, 0), dy, 1), dz, 2)
        return out

    closed = cheb_erode(cheb_dilate(work))
    return closed[pad:-pad, pad:-pad, pad:-pad]


def all_pairs_self_intersections(mesh) -> np.ndarray:
    """Every non-adjacent intersecting triangle pair, no broad phase."""
    from cortexforge.trigeom import triangles_intersect

    t = mesh.triangles
    n = len(t)
    ii, jj = np.triu_indices(n, k=1)
    shared = np.zeros(len(ii), dtype=bool)
    for a in range(3):
        for b in range(3):
            shared |= t[ii, a] == t[jj, b]
    ii, jj = ii[~shared], jj[~shared]
    tri = mesh.vertices[t]
    hits = np.zeros(len(ii), dtype=bool)
    chunk = 200_000
    for s in range(0, len(ii), chunk):
        sl = slice(s, s + chunk)
        hits[sl] = triangles_intersect(tri[ii[sl]], tri[jj[sl]])
    out = np.stack([ii[hits], jj[hits]], axis=1)
    order = np.lexsort((out[:, 1], out[:, 0]))
    return out[order]


def random_closed_mesh(rng: np.random.Generator, n_points: int, radius: float = 10.0, center=(0.0, 0.0, 0.0)):
    """Random closed convex triangulation: hull of points on a sphere."""
    from scipy.spatial import ConvexHull

    from cortexforge.mesh import TriangleMesh

    pts = rng.normal(size=(n_points, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts = pts * radius + np.asarray(center, dtype=np.float64)
    hull = ConvexHull(pts)
    tris = hull.simplices.copy()
    # orient every face outward from the hull centroid
    tri_pts = pts[tris]
    centroid = pts.mean(axis=0)
    normals = np.cross(tri_pts[:, 1] - tri_pts[:, 0], tri_pts[:, 2] - tri_pts[:, 0])
    flip = np.einsum("ij,ij->i", normals, tri_pts.mean(axis=1) - centroid) < 0
    tris[flip] = tris[flip][:, ::-1]
    return TriangleMesh(pts, tris)
