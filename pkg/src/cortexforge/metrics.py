"""Cortical measurements and surface-comparison statistics.

Distances between surfaces are exact point-to-triangle minima over mesh
vertices (vertex sampling); AAD pools both directions, HD90 is the
nearest-rank 90th percentile of the pooled distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .mesh import TriangleMesh, vertex_normals
from .trigeom import SurfaceProximity


@dataclass(frozen=True)
class SurfaceScalars:
    """Per-vertex scalar field attached to a mesh."""

    mesh: TriangleMesh
    values: np.ndarray
    quantity: str  # thickness_mm | sulcal_depth_mm | curvature_per_mm

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.mesh.n_vertices,):
            raise InvalidInputError("one scalar per vertex required")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("surface scalars must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DistanceReport:
    aad_mm: float
    hd90_mm: float
    mean_a_to_b: float
    mean_b_to_a: float


def _require_same_connectivity(a: TriangleMesh, b: TriangleMesh):
    if a.n_vertices != b.n_vertices or not np.array_equal(a.triangles, b.triangles):
        raise InvalidInputError("meshes must share vertex count and connectivity")


def thickness(wm: TriangleMesh, pial: TriangleMesh) -> SurfaceScalars:
    """Node-wise cortical thickness between corresponding surfaces.

    Per vertex: half the distance from the inner vertex to the outer surface
    plus half the distance from the corresponding outer vertex back to the
    inner surface. Symmetric in its arguments by construction.
    """
    _require_same_connectivity(wm, pial)
    to_pial = SurfaceProximity(pial.vertices, pial.triangles).distances(wm.vertices)
    to_wm = SurfaceProximity(wm.vertices, wm.triangles).distances(pial.vertices)
    return SurfaceScalars(wm, 0.5 * (to_pial + to_wm), "thickness_mm")


def sulcal_depth(mesh: TriangleMesh, inflated_displacements: np.ndarray) -> SurfaceScalars:
    """Mean-centered accumulated normal displacement from inflation.

    Sulcal pits moved outward during inflation (positive), gyral crowns moved
    inward (negative).
    """
    if inflated_displacements is None:
        raise InvalidInputError("inflation displacement record is required")
    disp = np.asarray(inflated_displacements, dtype=np.float64)
    if disp.shape != (mesh.n_vertices,):
        raise InvalidInputError("displacement record does not match the mesh")
    return SurfaceScalars(mesh, disp - disp.mean(), "sulcal_depth_mm")


def curvature(mesh: TriangleMesh) -> SurfaceScalars:
    """Mean curvature from the cotangent Laplace-Beltrami operator.

    H = 0.5 * ||Laplacian(x)|| with mixed Voronoi vertex areas, positive where
    the Laplacian points against the outward normal (convex regions of an
    outward-oriented surface).
    """
    x = mesh.vertices
    tri = mesh.triangles
    p0, p1, p2 = x[tri[:, 0]], x[tri[:, 1]], x[tri[:, 2]]

    def cot(at, o1, o2):
        u = o1 - at
        v = o2 - at
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        if np.any(cross < 1e-14):
            raise InvalidInputError("degenerate (zero-area) triangle in curvature computation")
        return np.einsum("ij,ij->i", u, v) / cross

    cots = np.stack([cot(p0, p1, p2), cot(p1, p2, p0), cot(p2, p0, p1)], axis=1)

    nv = mesh.n_vertices
    lap = np.zeros((nv, 3))

    def add(i_idx, j_idx, w):
        d = x[j_idx] - x[i_idx]
        for c in range(3):
            lap[:, c] += np.bincount(i_idx, weights=w * d[:, c], minlength=nv)
            lap[:, c] += np.bincount(j_idx, weights=-w * d[:, c], minlength=nv)

    add(tri[:, 1], tri[:, 2], cots[:, 0])
    add(tri[:, 2], tri[:, 0], cots[:, 1])
    add(tri[:, 0], tri[:, 1], cots[:, 2])

    # mixed Voronoi areas: circumcentric for non-obtuse triangles, area/2 at
    # the obtuse corner and area/4 elsewhere otherwise
    areas = mesh.triangle_areas()
    edge_sq = np.stack(
        [
            np.einsum("ij,ij->i", p2 - p1, p2 - p1),  # opposite corner 0
            np.einsum("ij,ij->i", p0 - p2, p0 - p2),  # opposite corner 1
            np.einsum("ij,ij->i", p1 - p0, p1 - p0),  # opposite corner 2
        ],
        axis=1,
    )
    obtuse_any = (cots < 0).any(axis=1)
    corner_area = np.empty_like(cots)
    # voronoi: corner k gets 1/8 (|e_next|^2 cot_next + |e_prev|^2 cot_prev)
    for k in range(3):
        nxt, prv = (k + 1) % 3, (k + 2) % 3
        corner_area[:, k] = 0.125 * (edge_sq[:, nxt] * cots[:, nxt] + edge_sq[:, prv] * cots[:, prv])
    for k in range(3):
        obtuse_here = cots[:, k] < 0
        corner_area[obtuse_here, :] = areas[obtuse_here, None] / 4.0
        corner_area[obtuse_here, k] = areas[obtuse_here] / 2.0
    vertex_area = np.zeros(nv)
    for k in range(3):
        vertex_area += np.bincount(tri[:, k], weights=corner_area[:, k], minlength=nv)
    lap /= (2.0 * vertex_area)[:, None]

    normals = vertex_normals(mesh)
    magnitude = 0.5 * np.linalg.norm(lap, axis=1)
    sign = -np.sign(np.einsum("ij,ij->i", lap, normals))
    return SurfaceScalars(mesh, magnitude * np.where(sign == 0, 1.0, sign), "curvature_per_mm")


def angle_defects(mesh: TriangleMesh) -> np.ndarray:
    """2*pi minus the sum of incident triangle angles per vertex."""
    x = mesh.vertices
    tri = mesh.triangles
    nv = mesh.n_vertices
    total = np.zeros(nv)
    for k in range(3):
        at = x[tri[:, k]]
        u = x[tri[:, (k + 1) % 3]] - at
        v = x[tri[:, (k + 2) % 3]] - at
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        total += np.bincount(tri[:, k], weights=ang, minlength=nv)
    return 2.0 * np.pi - total


def surface_distance(a: TriangleMesh, b: TriangleMesh) -> DistanceReport:
    """AAD and HD90 between two surfaces from pooled vertex-to-surface distances."""
    if a.n_triangles == 0 or b.n_triangles == 0:
        raise InvalidInputError("surface distance of an empty mesh")
    d_ab = SurfaceProximity(b.vertices, b.triangles).distances(a.vertices)
    d_ba = SurfaceProximity(a.vertices, a.triangles).distances(b.vertices)
    pooled = np.concatenate([d_ab, d_ba])
    rank = int(np.ceil(0.9 * len(pooled))) - 1
    hd90 = float(np.sort(pooled)[rank])
    return DistanceReport(
        aad_mm=float(pooled.mean()),
        hd90_mm=hd90,
        mean_a_to_b=float(d_ab.mean()),
        mean_b_to_a=float(d_ba.mean()),
    )
