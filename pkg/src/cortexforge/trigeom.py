"""Exact triangle geometry kernels shared by the sdf, mesh and metrics modules.

Everything here is vectorized over numpy arrays: point-to-triangle distances,
a bounding-sphere proximity index for exact closest-distance queries against a
triangle soup, and an exact triangle-triangle intersection test for closed
(boundary included) triangles.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def point_triangle_distances(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from each point to its paired triangle.

    All inputs are (N, 3); the classification into the seven Voronoi regions
    of the triangle follows the standard closest-point construction.
    """
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, pts):
        todo = mask & ~done
        closest[todo] = pts[todo]
        done[todo] = True

    assign((d1 <= 0) & (d2 <= 0), a)
    assign((d3 >= 0) & (d4 <= d3), b)
    assign((d6 >= 0) & (d5 <= d6), c)

    with np.errstate(divide="ignore", invalid="ignore"):
        vc = d1 * d4 - d3 * d2
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)

        vb = d5 * d2 - d1 * d6
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)

        va = d3 * d6 - d5 * d4
        num = d4 - d3
        den = (d4 - d3) + (d5 - d6)
        w_bc = np.where(den != 0, num / den, 0.0)
        assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))

        denom = va + vb + vc
        denom = np.where(denom != 0, denom, 1.0)
        v = vb / denom
        w = vc / denom
        assign(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)

    return np.linalg.norm(p - closest, axis=1)


class SurfaceProximity:
    """Exact closest-distance queries from points to a fixed triangle set.

    A k-d tree over triangle centroids plus per-triangle bounding radii prunes
    candidates without ever discarding the true minimizer: a triangle can
    only beat the current upper bound ``ub`` if its centroid lies within
    ``ub + max_radius`` of the query point.
    """

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if len(triangles) == 0:
            raise ValueError("cannot build proximity index for an empty triangle set")
        self.tri_a = vertices[triangles[:, 0]]
        self.tri_b = vertices[triangles[:, 1]]
        self.tri_c = vertices[triangles[:, 2]]
        self.centroids = (self.tri_a + self.tri_b + self.tri_c) / 3.0
        self.radii = np.maximum.reduce(
            [
                np.linalg.norm(self.tri_a - self.centroids, axis=1),
                np.linalg.norm(self.tri_b - self.centroids, axis=1),
                np.linalg.norm(self.tri_c - self.centroids, axis=1),
            ]
        )
        self.max_radius = float(self.radii.max())
        self.tree = cKDTree(self.centroids)
        self.n_triangles = len(triangles)

    def _exact(self, pts: np.ndarray, tri_idx: np.ndarray, pt_idx: np.ndarray) -> np.ndarray:
        return point_triangle_distances(
            pts[pt_idx], self.tri_a[tri_idx], self.tri_b[tri_idx], self.tri_c[tri_idx]
        )

    def distances(self, points: np.ndarray, max_distance: float | None = None, chunk: int = 4096) -> np.ndarray:
        """Exact min distance per point; with ``max_distance`` the result is
        ``min(true_distance, max_distance)`` (still exact below the cap)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty(len(points))
        for start in range(0, len(points), chunk):
            sl = slice(start, min(start + chunk, len(points)))
            out[sl] = self._distances_chunk(points[sl], max_distance)
        return out

    def _distances_chunk(self, pts: np.ndarray, max_distance: float | None) -> np.ndarray:
        n = len(pts)
        k = min(4, self.n_triangles)
        d_c, idx = self.tree.query(pts, k=k)
        if k == 1:
            d_c = d_c[:, None]
            idx = idx[:, None]
        flat_idx = idx.ravel()
        flat_pt = np.repeat(np.arange(n), k)
        seed = self._exact(pts, flat_idx, flat_pt).reshape(n, k)
        ub = seed.min(axis=1)
        result = ub.copy()

        search = ub.copy()
        if max_distance is not None:
            np.minimum(search, max_distance, out=search)
            # centroid lower bound already proves the point is beyond the cap
            need = d_c[:, 0] - self.max_radius <= max_distance
        else:
            need = np.ones(n, dtype=bool)
        radius = search + self.max_radius + 1e-9

        need_idx = np.flatnonzero(need)
        lists = self.tree.query_ball_point(pts[need_idx], radius[need_idx])
        cand_tri = []
        cand_pt = []
        for row, cands in zip(need_idx, lists):
            if cands:
                cand_tri.append(np.asarray(cands, dtype=np.int64))
                cand_pt.append(np.full(len(cands), row, dtype=np.int64))
        if cand_tri:
            cand_tri = np.concatenate(cand_tri)
            cand_pt = np.concatenate(cand_pt)
            d = self._exact(pts, cand_tri, cand_pt)
            np.minimum.at(result, cand_pt, d)
        if max_distance is not None:
            np.minimum(result, max_distance, out=result)
        return result


# ------------------- triangle-triangle intersection -------------------------


def _segments_cross_2d(p1, p2, q1, q2):
    """Inclusive 2D segment intersection, vectorized over the first axis."""

    def orient(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_segment(a, b, c, d):
        # c collinear with (a, b): inside the bounding box?
        return (
            (d == 0)
            & (np.minimum(a[:, 0], b[:, 0]) <= c[:, 0])
            & (c[:, 0] <= np.maximum(a[:, 0], b[:, 0]))
            & (np.minimum(a[:, 1], b[:, 1]) <= c[:, 1])
            & (c[:, 1] <= np.maximum(a[:, 1], b[:, 1]))
        )

    touch = (
        on_segment(q1, q2, p1, d1)
        | on_segment(q1, q2, p2, d2)
        | on_segment(p1, p2, q1, d3)
        | on_segment(p1, p2, q2, d4)
    )
    return proper | touch


def _point_in_triangle_2d(p, a, b, c):
    def orient(u, v, w):
        return (v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w[:, 0] - u[:, 0])

    d1 = orient(a, b, p)
    d2 = orient(b, c, p)
    d3 = orient(c, a, p)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def _coplanar_overlap(t1: np.ndarray, t2: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """2D overlap of coplanar triangle pairs; inputs (N, 3, 3), normals (N, 3)."""
    drop = np.argmax(np.abs(normal), axis=1)
    keep = np.stack([(drop + 1) % 3, (drop + 2) % 3], axis=1)
    rows = np.arange(len(t1))[:, None, None]
    corner = np.arange(3)[None, :, None]
    p1 = t1[rows, corner, keep[:, None, :]]
    p2 = t2[rows, corner, keep[:, None, :]]

    hit = np.zeros(len(t1), dtype=bool)
    for i in range(3):
        for j in range(3):
            hit |= _segments_cross_2d(
                p1[:, i], p1[:, (i + 1) % 3], p2[:, j], p2[:, (j + 1) % 3]
            )
    for i in range(3):
        hit |= _point_in_triangle_2d(p1[:, i], p2[:, 0], p2[:, 1], p2[:, 2])
        hit |= _point_in_triangle_2d(p2[:, i], p1[:, 0], p1[:, 1], p1[:, 2])
    return hit


def _segment_triangle_hits(orig, dest, v0, v1, v2):
    """Inclusive segment-triangle intersection (Moller-Trumbore), vectorized."""
    eps = 0.0
    direction = dest - orig
    e1 = v1 - v0
    e2 = v2 - v0
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = det != eps
    inv = np.where(ok, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    s = orig - v0
    u = inv * np.einsum("ij,ij->i", s, h)
    q = np.cross(s, e1)
    v = inv * np.einsum("ij,ij->i", direction, q)
    t = inv * np.einsum("ij,ij->i", e2, q)
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def triangles_intersect(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Whether each pair of closed triangles intersects; inputs (N, 3, 3).

    Non-coplanar pairs are decided by the six inclusive segment-triangle
    tests (any intersection segment must touch an edge of one triangle);
    exactly coplanar pairs fall back to a 2D overlap test.
    """
    n1 = np.cross(t1[:, 1] - t1[:, 0], t1[:, 2] - t1[:, 0])
    n2 = np.cross(t2[:, 1] - t2[:, 0], t2[:, 2] - t2[:, 0])

    d1 = np.einsum("nj,nij->ni", n2, t1 - t2[:, 0][:, None, :])
    d2 = np.einsum("nj,nij->ni", n1, t2 - t1[:, 0][:, None, :])

    separated = ((d1 > 0).all(axis=1) | (d1 < 0).all(axis=1)) | (
        (d2 > 0).all(axis=1) | (d2 < 0).all(axis=1)
    )
    coplanar = (d1 == 0).all(axis=1) & (d2 == 0).all(axis=1)

    out = np.zeros(len(t1), dtype=bool)
    general = ~separated & ~coplanar
    if general.any():
        a = t1[general]
        b = t2[general]
        hit = np.zeros(general.sum(), dtype=bool)
        for i in range(3):
            hit |= _segment_triangle_hits(a[:, i], a[:, (i + 1) % 3], b[:, 0], b[:, 1], b[:, 2])
            hit |= _segment_triangle_hits(b[:, i], b[:, (i + 1) % 3], a[:, 0], a[:, 1], a[:, 2])
        out[general] = hit
    if coplanar.any():
        out[coplanar] = _coplanar_overlap(t1[coplanar], t2[coplanar], n1[coplanar])
    return out
