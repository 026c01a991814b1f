"""Analytic test phantoms: spheres, concentric shells and folded spheres.

Every phantom carries its label map, exact signed fields evaluated on the
grid, and reference meshes, so reconstruction accuracy can be measured against
closed-form geometry instead of against another implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .mesh import TriangleMesh
from .sdf import SdfVolume
from .volume import GridGeometry, LabelVolume

# regular icosahedron on the unit sphere
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def icosphere(radius: float, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron projected onto the sphere, outward oriented."""
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES.copy()
    for _ in range(int(subdivisions)):
        edge_key = {}
        new_verts = [verts]
        next_id = len(verts)

        def midpoint(i, j):
            nonlocal next_id
            key = (min(i, j), max(i, j))
            if key not in edge_key:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                new_verts.append(m[None])
                edge_key[key] = next_id
                next_id += 1
            return edge_key[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.concatenate(new_verts)
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        faces = np.asarray(new_faces, dtype=np.int64)
    return TriangleMesh(verts * radius + np.asarray(center, dtype=np.float64), faces)


def folded_sphere(
    base_radius: float,
    amplitude: float,
    frequency: int = 6,
    subdivisions: int = 4,
    center=(0.0, 0.0, 0.0),
) -> TriangleMesh:
    """Icosphere with radius modulated as r(theta, phi) = base + amp*sin(f*theta)*sin(f*phi)."""
    unit = icosphere(1.0, subdivisions)
    d = unit.vertices
    r = base_radius + amplitude * _fold_profile(d, frequency)
    return TriangleMesh(d * r[:, None] + np.asarray(center, dtype=np.float64), unit.triangles)


def _fold_profile(directions: np.ndarray, frequency: int) -> np.ndarray:
    theta = np.arccos(np.clip(directions[:, 2], -1.0, 1.0))
    phi = np.arctan2(directions[:, 1], directions[:, 0])
    return np.sin(frequency * theta) * np.sin(frequency * phi)


@dataclass(frozen=True)
class Phantom:
    labels: LabelVolume
    meshes: dict = field(default_factory=dict)
    sdfs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


def _default_geometry(dims, spacing_mm):
    dims = tuple(int(d) for d in dims)
    return GridGeometry.isotropic(dims, spacing_mm)


def _radial_distance(geometry: GridGeometry, center: np.ndarray) -> np.ndarray:
    pts = geometry.voxel_centers_world()
    return np.linalg.norm(pts - center, axis=-1)


def make_phantom(kind: str, **params) -> Phantom:
    """Construct a named phantom: ``sphere``, ``concentric`` or ``folded``.

    The sphere and concentric fields are exact SDFs (||x - c|| - r). The
    folded field is the radial offset rho - r(theta, phi): its zero level set
    is exact, magnitudes away from zero are approximate.
    """
    kind = kind.lower()
    if kind == "sphere":
        return _sphere_phantom(**params)
    if kind == "concentric":
        return _concentric_phantom(**params)
    if kind == "folded":
        return _folded_phantom(**params)
    raise InvalidInputError(f"unknown phantom kind {kind!r}")


def _center_world(geometry: GridGeometry) -> np.ndarray:
    center_idx = np.array([d // 2 for d in geometry.dims], dtype=np.float64)
    return geometry.index_to_world(center_idx)


def _sphere_phantom(radius=12.0, dims=(64, 64, 64), spacing_mm=1.0, subdivisions=4):
    if radius <= 0:
        raise InvalidInputError("radius must be positive")
    geometry = _default_geometry(dims, spacing_mm)
    center = _center_world(geometry)
    rho = _radial_distance(geometry, center)
    sdf = SdfVolume(geometry, rho - radius)
    labels = LabelVolume(geometry, (sdf.data < 0).astype(np.int32))
    mesh = icosphere(radius, subdivisions, center)
    return Phantom(
        labels=labels,
        meshes={"surface": mesh},
        sdfs={"surface": sdf},
        params={"kind": "sphere", "radius": radius, "center": center.tolist()},
    )


def _concentric_phantom(
    inner_radius=12.0, outer_radius=15.0, dims=(64, 64, 64), spacing_mm=1.0, subdivisions=4
):
    if not 0 < inner_radius < outer_radius:
        raise InvalidInputError("concentric phantom needs 0 < inner_radius < outer_radius")
    geometry = _default_geometry(dims, spacing_mm)
    center = _center_world(geometry)
    rho = _radial_distance(geometry, center)
    inner = SdfVolume(geometry, rho - inner_radius)
    outer = SdfVolume(geometry, rho - outer_radius)
    labels = np.zeros(geometry.dims, dtype=np.int32)
    labels[inner.data < 0] = 1  # white-matter core
    labels[(inner.data > 0) & (outer.data < 0)] = 2  # cortical shell
    return Phantom(
        labels=LabelVolume(geometry, labels),
        meshes={
            "wm": icosphere(inner_radius, subdivisions, center),
            "pial": icosphere(outer_radius, subdivisions, center),
        },
        sdfs={"wm": inner, "pial": outer},
        params={
            "kind": "concentric",
            "inner_radius": inner_radius,
            "outer_radius": outer_radius,
            "center": center.tolist(),
        },
    )


def _folded_phantom(
    base_radius=12.0,
    amplitude=1.5,
    frequency=6,
    dims=(64, 64, 64),
    spacing_mm=1.0,
    subdivisions=4,
):
    if base_radius <= amplitude:
        raise InvalidInputError("amplitude must be smaller than the base radius")
    geometry = _default_geometry(dims, spacing_mm)
    center = _center_world(geometry)
    pts = geometry.voxel_centers_world() - center
    rho = np.linalg.norm(pts, axis=-1)
    flat = pts.reshape(-1, 3)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(rho.reshape(-1, 1) > 0, flat / np.maximum(rho.reshape(-1, 1), 1e-12), 0.0)
    surface_r = base_radius + amplitude * _fold_profile(d, frequency)
    offsets = (rho.reshape(-1) - surface_r).reshape(geometry.dims)
    field_vol = SdfVolume(geometry, offsets)
    labels = LabelVolume(geometry, (offsets < 0).astype(np.int32))
    mesh = folded_sphere(base_radius, amplitude, frequency, subdivisions, center)
    return Phantom(
        labels=labels,
        meshes={"surface": mesh},
        sdfs={"surface": field_vol},
        params={
            "kind": "folded",
            "base_radius": base_radius,
            "amplitude": amplitude,
            "frequency": frequency,
            "center": center.tolist(),
        },
    )
