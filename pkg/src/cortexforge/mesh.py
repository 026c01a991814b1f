"""Triangle meshes: construction from binary masks, topology checks and repair,
smoothing, per-vertex frames, self-intersection detection, and inflation.

Tessellation follows the voxel-face construction: every boundary face between a
foreground voxel and background (6-connectivity) becomes a quad split into two
outward-oriented triangles, with vertices on the voxel-corner lattice. Corner
instances are welded per local surface sheet, so the result is always closed
and edge-manifold, even for masks with diagonal pinches (the sheets then meet
at duplicated, coincident vertices instead of sharing them).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import InvalidInputError, TopologyError, TopologyRepairError
from .trigeom import triangles_intersect
from .volume import GridGeometry, LabelVolume, fill_cavities, largest_component, morphological_close


class TriangleMesh:
    """Immutable triangle mesh with world-mm vertices and cached adjacency."""

    def __init__(self, vertices, triangles, validated: bool = False):
        vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise InvalidInputError("mesh vertices must be finite")
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise InvalidInputError("triangle indices out of range")
        if len(triangles):
            t = triangles
            if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
                raise InvalidInputError("triangle repeats a vertex")
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        self.vertices = vertices
        self.triangles = triangles
        self._validated = bool(validated)
        self._cache: dict = {}

    # ------------------------------------------------------------------ basic

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def validated(self) -> bool:
        return self._validated

    def with_vertices(self, vertices: np.ndarray) -> "TriangleMesh":
        """Same connectivity, new positions; topology caches carry over."""
        out = TriangleMesh(vertices, self.triangles, validated=self._validated)
        for key in ("edges", "directed", "csr"):
            if key in self._cache:
                out._cache[key] = self._cache[key]
        return out

    # ------------------------------------------------------------- adjacency

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, each row sorted, shape (E, 2)."""
        if "edges" not in self._cache:
            tri = self.triangles
            raw = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
            raw.sort(axis=1)
            self._cache["edges"] = np.unique(raw, axis=0)
        return self._cache["edges"]

    @property
    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays (v, u) listing every ordered neighbour pair u in N_v once."""
        if "directed" not in self._cache:
            e = self.edges
            v = np.concatenate([e[:, 0], e[:, 1]])
            u = np.concatenate([e[:, 1], e[:, 0]])
            order = np.argsort(v, kind="stable")
            self._cache["directed"] = (v[order], u[order])
        return self._cache["directed"]

    @property
    def vertex_degrees(self) -> np.ndarray:
        v, _ = self.directed_edges
        return np.bincount(v, minlength=self.n_vertices)

    def neighbor_average(self, values: np.ndarray) -> np.ndarray:
        """Mean of ``values`` over each vertex's 1-ring (uniform weights)."""
        v, u = self.directed_edges
        deg = np.maximum(self.vertex_degrees, 1)
        if values.ndim == 1:
            return np.bincount(v, weights=values[u], minlength=self.n_vertices) / deg
        out = np.empty((self.n_vertices, values.shape[1]))
        for c in range(values.shape[1]):
            out[:, c] = np.bincount(v, weights=values[u, c], minlength=self.n_vertices)
        return out / deg[:, None]

    # -------------------------------------------------------------- geometry

    def triangle_cross(self) -> np.ndarray:
        tri = self.vertices[self.triangles]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_cross(), axis=1)

    def total_area(self) -> float:
        return float(self.triangle_areas().sum())

    def enclosed_volume(self) -> float:
        """Signed volume via the divergence theorem; positive for outward orientation."""
        tri = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)

    # -------------------------------------------------------------- topology

    def is_edge_manifold_closed(self) -> bool:
        tri = self.triangles
        raw = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        raw.sort(axis=1)
        _, counts = np.unique(raw, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def is_consistently_oriented(self) -> bool:
        tri = self.triangles
        directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        _, counts = np.unique(directed, axis=0, return_counts=True)
        return bool(np.all(counts == 1))

    def component_count(self) -> int:
        e = self.edges
        if len(e) == 0:
            return self.n_vertices
        graph = sparse.coo_matrix(
            (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n_vertices,) * 2
        )
        n, _ = connected_components(graph, directed=False)
        return int(n)

    def validate(self) -> "TriangleMesh":
        """Check closed edge-manifoldness, consistent orientation and chi = 2."""
        if self._validated:
            return self
        if self.n_triangles == 0:
            raise TopologyError("empty mesh")
        if not self.is_edge_manifold_closed():
            raise TopologyError("mesh is not a closed edge-manifold surface")
        if not self.is_consistently_oriented():
            raise TopologyError("mesh orientation is inconsistent")
        if self.component_count() != 1:
            raise TopologyError("mesh has multiple connected components")
        chi = euler_characteristic(self)
        if chi != 2:
            raise TopologyError(f"mesh is not genus 0 (Euler characteristic {chi})")
        self._validated = True
        return self


@dataclass(frozen=True)
class VertexFrame:
    """Per-vertex orthonormal frame: outward normal and two tangent axes."""

    normals: np.ndarray
    e1: np.ndarray
    e2: np.ndarray


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F with E counted over unique undirected edges."""
    return int(mesh.n_vertices - len(mesh.edges) + mesh.n_triangles)


# ------------------------------- tessellation --------------------------------

# ring positions around a lattice edge, CCW around the +edge axis, as offsets
# of the ring voxels along the two perpendicular axes relative to the corner
_RING_OFFSETS = np.array([(-1, -1), (0, -1), (0, 0), (-1, 0)], dtype=np.int64)
_RING_POS = {(-1, -1): 0, (0, -1): 1, (0, 0): 2, (-1, 0): 3}

# quad corner offsets along (a+1)%3 and (a+2)%3 for a face with outward axis a
_QUAD_PLUS = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=np.int64)
_QUAD_MINUS = _QUAD_PLUS[::-1].copy()


def _boundary_faces(mask: np.ndarray):
    """All (voxel, axis, sign) boundary faces of a binary mask."""
    voxels = []
    axes = []
    signs = []
    for a in range(3):
        for s in (1, -1):
            shifted = np.zeros_like(mask)
            if s == 1:
                sl_from = [slice(None)] * 3
                sl_to = [slice(None)] * 3
                sl_from[a] = slice(1, None)
                sl_to[a] = slice(None, -1)
            else:
                sl_from = [slice(None)] * 3
                sl_to = [slice(None)] * 3
                sl_from[a] = slice(None, -1)
                sl_to[a] = slice(1, None)
            shifted[tuple(sl_to)] = mask[tuple(sl_from)]
            ijk = np.argwhere(mask & ~shifted)
            voxels.append(ijk)
            axes.append(np.full(len(ijk), a, dtype=np.int64))
            signs.append(np.full(len(ijk), s, dtype=np.int64))
    return np.concatenate(voxels), np.concatenate(axes), np.concatenate(signs)


def _face_corners(voxels, axes, signs):
    """Lattice-corner coordinates of the 4 quad slots per face, (F, 4, 3)."""
    nf = len(voxels)
    corners = np.repeat(voxels[:, None, :], 4, axis=1)
    a1 = (axes + 1) % 3
    a2 = (axes + 2) % 3
    rows = np.arange(nf)
    corners[rows, :, axes] += (signs == 1).astype(np.int64)[:, None]
    offs = np.where(signs[:, None, None] == 1, _QUAD_PLUS[None], _QUAD_MINUS[None])
    corners[rows[:, None], np.arange(4)[None, :], a1[:, None]] += offs[:, :, 0]
    corners[rows[:, None], np.arange(4)[None, :], a2[:, None]] += offs[:, :, 1]
    return corners


def _mask_at(mask: np.ndarray, ijk: np.ndarray) -> np.ndarray:
    """Mask values at voxel coordinates, out-of-grid reads as background."""
    dims = mask.shape
    inside = np.all((ijk >= 0) & (ijk < dims), axis=-1)
    safe = np.clip(ijk, 0, np.array(dims) - 1)
    vals = mask[safe[..., 0], safe[..., 1], safe[..., 2]]
    return vals & inside


def tessellate(mask: LabelVolume) -> TriangleMesh:
    """Triangle mesh of the boundary of a binary mask (outward oriented).

    Vertices sit on the voxel-corner lattice in world mm. Welding is local:
    corner instances merge only when their quads are connected around the
    shared lattice edges, which keeps the output closed and edge-manifold for
    arbitrary masks.
    """
    data = mask.data
    if not np.all((data == 0) | (data == 1)):
        raise InvalidInputError("tessellate expects a binary mask")
    binary = data.astype(bool)
    if not binary.any():
        raise InvalidInputError("tessellate of an empty mask")

    voxels, axes, signs = _boundary_faces(binary)
    nf = len(voxels)
    corners = _face_corners(voxels, axes, signs)  # (F, 4, 3)

    # --- per-side edge keys and ring transition slots -----------------------
    nxc, nyc, nzc = (d + 1 for d in binary.shape)

    def corner_linear(c):
        return (c[..., 0] * nyc + c[..., 1]) * nzc + c[..., 2]

    side_a = corners  # slot m
    side_b = np.roll(corners, -1, axis=1)  # slot m+1
    edge_axis = np.argmax(side_a != side_b, axis=2)  # (F, 4)
    edge_base = np.minimum(side_a, side_b)  # (F, 4, 3)

    e1 = (edge_axis + 1) % 3
    e2 = (edge_axis + 2) % 3

    fg = np.repeat(voxels[:, None, :], 4, axis=1)
    bg = fg.copy()
    rows = np.arange(nf)
    bg[rows, :, axes] += signs[:, None]

    take = np.arange(3)[None, None, :]
    fg_off1 = np.take_along_axis(fg, e1[..., None], axis=2)[..., 0] - np.take_along_axis(
        edge_base, e1[..., None], axis=2
    )[..., 0]
    fg_off2 = np.take_along_axis(fg, e2[..., None], axis=2)[..., 0] - np.take_along_axis(
        edge_base, e2[..., None], axis=2
    )[..., 0]
    bg_off1 = np.take_along_axis(bg, e1[..., None], axis=2)[..., 0] - np.take_along_axis(
        edge_base, e1[..., None], axis=2
    )[..., 0]
    bg_off2 = np.take_along_axis(bg, e2[..., None], axis=2)[..., 0] - np.take_along_axis(
        edge_base, e2[..., None], axis=2
    )[..., 0]

    pos_lut = np.full((2, 2), -1, dtype=np.int64)
    for (o1, o2), p in _RING_POS.items():
        pos_lut[o1 + 1, o2 + 1] = p
    pos_fg = pos_lut[fg_off1 + 1, fg_off2 + 1]
    pos_bg = pos_lut[bg_off1 + 1, bg_off2 + 1]
    slot = np.where((pos_fg + 1) % 4 == pos_bg, pos_fg, pos_bg)

    # ring occupancy bits for every side's edge
    ring = np.empty(edge_base.shape[:2] + (4,), dtype=bool)
    for p in range(4):
        voxel = edge_base.copy()
        np.put_along_axis(
            voxel,
            e1[..., None],
            np.take_along_axis(edge_base, e1[..., None], axis=2) + _RING_OFFSETS[p, 0],
            axis=2,
        )
        np.put_along_axis(
            voxel,
            e2[..., None],
            np.take_along_axis(voxel, e2[..., None], axis=2) + _RING_OFFSETS[p, 1],
            axis=2,
        )
        ring[..., p] = _mask_at(binary, voxel)

    # expand the foreground run containing pos_fg; partner slot closes the run
    flat_ring = ring.reshape(-1, 4)
    flat_pos = pos_fg.reshape(-1)
    flat_slot = slot.reshape(-1)
    lo = flat_pos.copy()
    hi = flat_pos.copy()
    idx = np.arange(len(flat_pos))
    for _ in range(3):
        prev = (lo - 1) % 4
        lo = np.where(flat_ring[idx, prev] & (prev != flat_pos), prev, lo)
        nxt = (hi + 1) % 4
        hi = np.where(flat_ring[idx, nxt] & (nxt != flat_pos), nxt, hi)
    slot_lo = (lo - 1) % 4
    slot_hi = hi
    partner = np.where(flat_slot == slot_lo, slot_hi, slot_lo)

    edge_key = (corner_linear(edge_base).reshape(-1) * 3 + edge_axis.reshape(-1)) * 4
    own_key = edge_key + flat_slot
    partner_key = edge_key + partner

    order = np.argsort(own_key)
    found = np.searchsorted(own_key[order], partner_key)
    if np.any(found >= len(order)) or np.any(own_key[order][np.minimum(found, len(order) - 1)] != partner_key):
        raise TopologyError("tessellation pairing failed; mask boundary is inconsistent")
    partner_side = order[found]

    # --- weld corner instances across paired sides ---------------------------
    side_idx = np.arange(4 * nf)
    face_of = side_idx // 4
    slot_of = side_idx % 4
    inst_a = 4 * face_of + slot_of  # corner slot m
    inst_b = 4 * face_of + (slot_of + 1) % 4  # corner slot m+1

    pa = partner_side
    corner_a = corner_linear(side_a.reshape(-1, 3))
    corner_b = corner_linear(side_b.reshape(-1, 3))
    match_aa = corner_a == corner_a[pa]
    weld_a_to = np.where(match_aa, inst_a[pa], inst_b[pa])
    weld_b_to = np.where(match_aa, inst_b[pa], inst_a[pa])

    src = np.concatenate([inst_a, inst_b])
    dst = np.concatenate([weld_a_to, weld_b_to])
    graph = sparse.coo_matrix((np.ones(len(src)), (src, dst)), shape=(4 * nf, 4 * nf))
    n_vertices, labels = connected_components(graph, directed=False)

    corner_flat = corners.reshape(-1, 3)
    first = np.full(n_vertices, -1, dtype=np.int64)
    seen = np.zeros(n_vertices, dtype=bool)
    uniq_order = np.argsort(labels, kind="stable")
    lab_sorted = labels[uniq_order]
    first_pos = np.searchsorted(lab_sorted, np.arange(n_vertices))
    first = uniq_order[first_pos]
    vertex_corner = corner_flat[first]

    geometry = mask.geometry
    positions = geometry.index_to_world(vertex_corner.astype(np.float64) - 0.5)

    quad = labels.reshape(nf, 4)
    tri1 = quad[:, [0, 1, 2]]
    tri2 = quad[:, [0, 2, 3]]
    triangles = np.concatenate([tri1, tri2])
    if np.linalg.det(geometry.origin_affine[:3, :3]) < 0:
        triangles = triangles[:, ::-1]
    return TriangleMesh(positions, triangles)


def has_duplicate_vertices(mesh: TriangleMesh, tol: float = 1e-9) -> bool:
    """True when distinct vertex indices share a position (pinched sheets)."""
    rounded = np.round(mesh.vertices / tol).astype(np.int64)
    return len(np.unique(rounded, axis=0)) != mesh.n_vertices


def ensure_genus_zero(mask: LabelVolume, max_rounds: int = 5):
    """Repair a mask until its tessellation is a single genus-0 surface.

    Each round keeps the largest component, closes with radius 1 (then 2 in
    later rounds) and fills enclosed cavities. Raises TopologyRepairError with
    the final Euler characteristic when the round budget is exhausted.
    """
    current = mask
    chi = None
    for round_idx in range(max_rounds + 1):
        mesh = tessellate(current)
        chi = euler_characteristic(mesh)
        if chi == 2 and mesh.component_count() == 1 and not has_duplicate_vertices(mesh):
            return current, mesh.validate()
        if round_idx == max_rounds:
            break
        current = largest_component(current)
        current = morphological_close(current, 1 if round_idx == 0 else 2)
        current = fill_cavities(current)
    raise TopologyRepairError(
        f"genus-0 repair failed after {max_rounds} rounds (Euler characteristic {chi})",
        euler_characteristic=chi,
    )


# ------------------------------ smoothing ------------------------------------


def smooth(mesh: TriangleMesh, iterations: int, lam: float = 0.5, mu: float = -0.53) -> TriangleMesh:
    """Two-phase (shrink/inflate) neighbourhood-average smoothing.

    Each iteration moves vertices toward their 1-ring mean by ``lam`` and then
    away by ``mu`` (negative), which smooths without the systematic shrinkage
    of plain averaging. Connectivity is untouched.
    """
    iterations = int(iterations)
    if iterations < 0:
        raise InvalidInputError("iterations must be >= 0")
    if not (0.0 < lam < -mu < 1.0):
        raise InvalidInputError(f"smoothing weights must satisfy 0 < lam < -mu < 1, got {lam}, {mu}")
    x = mesh.vertices.copy()
    for _ in range(iterations):
        avg = mesh.neighbor_average(x)
        x += lam * (avg - x)
        avg = mesh.neighbor_average(x)
        x += mu * (avg - x)
    return mesh.with_vertices(x)


# ------------------------------ vertex frames ---------------------------------


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident triangle normals, unit length."""
    cross = mesh.triangle_cross()
    acc = np.zeros((mesh.n_vertices, 3))
    for c in range(3):
        for k in range(3):
            acc[:, c] += np.bincount(
                mesh.triangles[:, k], weights=cross[:, c], minlength=mesh.n_vertices
            )
    norms = np.linalg.norm(acc, axis=1)
    if np.any(norms < 1e-14):
        raise InvalidInputError("zero-area umbrella: vertex has no usable normal")
    return acc / norms[:, None]


_HELPER_Z = np.array([0.0, 0.0, 1.0])
_HELPER_X = np.array([1.0, 0.0, 0.0])


def vertex_frames(mesh: TriangleMesh) -> VertexFrame:
    """Orthonormal (normal, tangent, tangent) frame at every vertex.

    The first tangent is the global z axis projected to the tangent plane,
    falling back to x where the normal is nearly parallel to z; deterministic
    so energies are reproducible.
    """
    n = vertex_normals(mesh)
    helper = np.where(np.abs(n @ _HELPER_Z)[:, None] > 0.9, _HELPER_X, _HELPER_Z)
    e1 = helper - (np.einsum("ij,ij->i", helper, n))[:, None] * n
    e1_norm = np.linalg.norm(e1, axis=1)
    if np.any(e1_norm < 1e-12):
        raise InvalidInputError("degenerate tangent frame")
    e1 /= e1_norm[:, None]
    e2 = np.cross(n, e1)
    return VertexFrame(normals=n, e1=e1, e2=e2)


# --------------------------- self-intersections --------------------------------


def candidate_pairs(mesh: TriangleMesh) -> np.ndarray:
    """Non-adjacent triangle pairs whose bounding spheres overlap."""
    tri = mesh.vertices[mesh.triangles]
    centroids = tri.mean(axis=1)
    radii = np.linalg.norm(tri - centroids[:, None, :], axis=2).max(axis=1)
    tree = cKDTree(centroids)
    pairs = tree.query_pairs(r=2.0 * radii.max() + 1e-9, output_type="ndarray")
    if len(pairs) == 0:
        return pairs.reshape(0, 2)
    d = np.linalg.norm(centroids[pairs[:, 0]] - centroids[pairs[:, 1]], axis=1)
    pairs = pairs[d <= radii[pairs[:, 0]] + radii[pairs[:, 1]] + 1e-9]
    ta = mesh.triangles[pairs[:, 0]]
    tb = mesh.triangles[pairs[:, 1]]
    shared = np.zeros(len(pairs), dtype=bool)
    for i in range(3):
        for j in range(3):
            shared |= ta[:, i] == tb[:, j]
    return pairs[~shared]


def self_intersections(mesh: TriangleMesh, pairs: np.ndarray | None = None) -> np.ndarray:
    """All non-adjacent triangle pairs whose closed triangles intersect.

    Returns an (N, 2) array of triangle index pairs, lexicographically sorted.
    Pairs sharing a vertex are excluded by definition.
    """
    if pairs is None:
        pairs = candidate_pairs(mesh)
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64)
    tri = mesh.vertices[mesh.triangles]
    hits = triangles_intersect(tri[pairs[:, 0]], tri[pairs[:, 1]])
    out = pairs[hits]
    out = np.sort(out, axis=1)
    order = np.lexsort((out[:, 1], out[:, 0]))
    return out[order].astype(np.int64)


# --------------------------------- inflation -----------------------------------


@dataclass(frozen=True)
class InflationResult:
    mesh: TriangleMesh
    normal_displacement: np.ndarray  # accumulated signed movement along normals


def inflate(mesh: TriangleMesh, iterations: int, lam: float = 0.2) -> InflationResult:
    """Iteratively smooth the surface while rescaling to preserve total area.

    The per-vertex record accumulates signed displacement along the running
    outward normal: positive where the surface moved outward (sulcal pits),
    negative where it moved inward (gyral crowns).
    """
    mesh.validate()
    iterations = int(iterations)
    if iterations < 0:
        raise InvalidInputError("iterations must be >= 0")
    x = mesh.vertices.copy()
    area0 = mesh.total_area()
    disp = np.zeros(mesh.n_vertices)
    current = mesh
    for _ in range(iterations):
        normals = vertex_normals(current)
        before = x.copy()
        avg = current.neighbor_average(x)
        x = x + lam * (avg - x)
        moved = current.with_vertices(x)
        scale = np.sqrt(area0 / moved.total_area())
        center = x.mean(axis=0)
        x = center + scale * (x - center)
        disp += np.einsum("ij,ij->i", x - before, normals)
        current = current.with_vertices(x)
    return InflationResult(mesh=current, normal_displacement=disp)
