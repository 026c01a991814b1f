"""Voxel-grid containers, trilinear interpolation, resampling and binary morphology.

Conventions used throughout the package:

* volumes are indexed ``data[i, j, k]`` with axis 0 = x; the canonical linear
  order of voxels is x-fastest (``ravel(order="F")``),
* ``origin_affine`` maps homogeneous voxel indices ``(i, j, k, 1)`` to world mm,
* sampling outside the grid clamps to the nearest border voxel,
* connected components are 6-connected; morphology uses the 26-neighbourhood
  (Chebyshev) ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError

_CROSS_26 = np.ones((3, 3, 3), dtype=bool)
_CROSS_6 = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class GridGeometry:
    """Shape, spacing and voxel-to-world affine of a 3D grid."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin_affine: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        affine = np.asarray(self.origin_affine, dtype=np.float64).copy()
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise InvalidInputError(f"dims must be three integers >= 1, got {self.dims}")
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise InvalidInputError(f"spacing must be three positive mm values, got {self.spacing}")
        if affine.shape != (4, 4) or not np.all(np.isfinite(affine)):
            raise InvalidInputError("origin_affine must be a finite 4x4 matrix")
        if abs(np.linalg.det(affine)) < 1e-12:
            raise InvalidInputError("origin_affine must be invertible")
        affine.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin_affine", affine)

    @classmethod
    def isotropic(cls, dims, spacing_mm: float = 1.0, origin_mm=(0.0, 0.0, 0.0)) -> "GridGeometry":
        """Axis-aligned grid with equal spacing and world origin at voxel (0,0,0)."""
        affine = np.diag([spacing_mm, spacing_mm, spacing_mm, 1.0])
        affine[:3, 3] = origin_mm
        return cls(tuple(dims), (spacing_mm,) * 3, affine)

    @property
    def inverse_affine(self) -> np.ndarray:
        return np.linalg.inv(self.origin_affine)

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    def voxel_centers_world(self) -> np.ndarray:
        """World coordinates of every voxel center, shape (nx, ny, nz, 3)."""
        nx, ny, nz = self.dims
        ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).astype(np.float64)
        return self.index_to_world(idx.reshape(-1, 3)).reshape(nx, ny, nz, 3)

    def index_to_world(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.float64)
        return idx @ self.origin_affine[:3, :3].T + self.origin_affine[:3, 3]

    def world_to_index(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        inv = self.inverse_affine
        return pts @ inv[:3, :3].T + inv[:3, 3]

    def same_grid(self, other: "GridGeometry") -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing)
            and np.allclose(self.origin_affine, other.origin_affine)
        )


def _check_data(geometry: GridGeometry, data: np.ndarray, name: str) -> None:
    if data.shape != tuple(geometry.dims):
        raise InvalidInputError(
            f"{name} data shape {data.shape} does not match dims {geometry.dims}"
        )


@dataclass(frozen=True)
class ScalarVolume:
    """Real-valued volume (image intensities or signed distances, in mm)."""

    geometry: GridGeometry
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        _check_data(self.geometry, data, "ScalarVolume")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("ScalarVolume values must all be finite")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def with_data(self, data: np.ndarray) -> "ScalarVolume":
        return ScalarVolume(self.geometry, data)


@dataclass(frozen=True)
class LabelVolume:
    """Integer label volume; background is label 0."""

    geometry: GridGeometry
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            raise InvalidInputError("LabelVolume data must be integer typed")
        data = data.astype(np.int32, copy=True)
        _check_data(self.geometry, data, "LabelVolume")
        if data.min(initial=0) < 0:
            raise InvalidInputError("labels must be non-negative")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def labels(self) -> np.ndarray:
        return np.unique(self.data)

    def with_data(self, data: np.ndarray) -> "LabelVolume":
        return LabelVolume(self.geometry, data)


Volume = ScalarVolume | LabelVolume


# --------------------------- interpolation ---------------------------------


def _trilinear_gather(data: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at fractional voxel indices, border-clamped."""
    nx, ny, nz = data.shape
    f = np.clip(idx, 0.0, [nx - 1, ny - 1, nz - 1])
    i0 = np.floor(f).astype(np.int64)
    i0[:, 0] = np.minimum(i0[:, 0], nx - 2) if nx > 1 else 0
    i0[:, 1] = np.minimum(i0[:, 1], ny - 2) if ny > 1 else 0
    i0[:, 2] = np.minimum(i0[:, 2], nz - 2) if nz > 1 else 0
    i0 = np.maximum(i0, 0)
    t = f - i0
    i1 = np.minimum(i0 + 1, [nx - 1, ny - 1, nz - 1])

    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    c000 = data[x0, y0, z0]
    c100 = data[x1, y0, z0]
    c010 = data[x0, y1, z0]
    c110 = data[x1, y1, z0]
    c001 = data[x0, y0, z1]
    c101 = data[x1, y0, z1]
    c011 = data[x0, y1, z1]
    c111 = data[x1, y1, z1]

    c00 = c000 * (1 - tx) + c100 * tx
    c10 = c010 * (1 - tx) + c110 * tx
    c01 = c001 * (1 - tx) + c101 * tx
    c11 = c011 * (1 - tx) + c111 * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    return c0 * (1 - tz) + c1 * tz


def _trilinear_gather_with_gradient(data: np.ndarray, idx: np.ndarray):
    """Values and index-space gradients of the trilinear interpolant.

    Outside the grid the interpolant is the clamped border value, so the
    gradient component along a clamped axis is zero.
    """
    nx, ny, nz = data.shape
    raw = np.asarray(idx, dtype=np.float64)
    f = np.clip(raw, 0.0, [nx - 1, ny - 1, nz - 1])
    clamped = raw != f
    i0 = np.floor(f).astype(np.int64)
    i0[:, 0] = np.minimum(i0[:, 0], nx - 2) if nx > 1 else 0
    i0[:, 1] = np.minimum(i0[:, 1], ny - 2) if ny > 1 else 0
    i0[:, 2] = np.minimum(i0[:, 2], nz - 2) if nz > 1 else 0
    i0 = np.maximum(i0, 0)
    t = f - i0
    i1 = np.minimum(i0 + 1, [nx - 1, ny - 1, nz - 1])

    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    c000 = data[x0, y0, z0]
    c100 = data[x1, y0, z0]
    c010 = data[x0, y1, z0]
    c110 = data[x1, y1, z0]
    c001 = data[x0, y0, z1]
    c101 = data[x1, y0, z1]
    c011 = data[x0, y1, z1]
    c111 = data[x1, y1, z1]

    c00 = c000 * (1 - tx) + c100 * tx
    c10 = c010 * (1 - tx) + c110 * tx
    c01 = c001 * (1 - tx) + c101 * tx
    c11 = c011 * (1 - tx) + c111 * tx
    c0 = c00 * (1 - ty) + c10 * ty
    c1 = c01 * (1 - ty) + c11 * ty
    value = c0 * (1 - tz) + c1 * tz

    dx00 = c100 - c000
    dx10 = c110 - c010
    dx01 = c101 - c001
    dx11 = c111 - c011
    gx = ((dx00 * (1 - ty) + dx10 * ty) * (1 - tz)) + ((dx01 * (1 - ty) + dx11 * ty) * tz)
    gy = ((c10 - c00) * (1 - tz)) + ((c11 - c01) * tz)
    gz = c1 - c0

    grad = np.stack([gx, gy, gz], axis=-1)
    grad[clamped] = 0.0
    return value, grad


def trilinear_sample(vol: ScalarVolume, p) -> float | np.ndarray:
    """Sample the volume at world point(s) ``p`` with trilinear interpolation.

    Accepts a single (3,) point or an (N, 3) batch; outside the grid the
    value of the nearest border voxel is returned.
    """
    pts = np.asarray(p, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise InvalidInputError("points must have 3 components")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("sample points must be finite")
    idx = vol.geometry.world_to_index(pts)
    out = _trilinear_gather(vol.data, idx)
    return float(out[0]) if single else out


def sample_with_world_gradient(vol: ScalarVolume, pts: np.ndarray):
    """Values and world-space gradients of the trilinear interpolant at ``pts``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("sample points must be finite")
    inv = vol.geometry.inverse_affine
    idx = pts @ inv[:3, :3].T + inv[:3, 3]
    value, grad_idx = _trilinear_gather_with_gradient(vol.data, idx)
    # chain rule through the world->index map
    grad_world = grad_idx @ inv[:3, :3]
    return value, grad_world


def resample(vol: Volume, target: GridGeometry, mode: str = "trilinear") -> Volume:
    """Resample onto ``target``; every output voxel pulls from its world position.

    Labels must use ``mode="nearest"``.
    """
    if mode not in ("trilinear", "nearest"):
        raise InvalidInputError(f"unknown resample mode {mode!r}")
    if isinstance(vol, LabelVolume) and mode == "trilinear":
        raise InvalidInputError("trilinear resampling of a LabelVolume is not allowed")

    pts = target.voxel_centers_world().reshape(-1, 3)
    idx = vol.geometry.world_to_index(pts)
    if mode == "trilinear":
        out = _trilinear_gather(vol.data, idx).reshape(target.dims)
        return ScalarVolume(target, out)
    nx, ny, nz = vol.geometry.dims
    nearest = np.rint(idx).astype(np.int64)
    nearest[:, 0] = np.clip(nearest[:, 0], 0, nx - 1)
    nearest[:, 1] = np.clip(nearest[:, 1], 0, ny - 1)
    nearest[:, 2] = np.clip(nearest[:, 2], 0, nz - 1)
    out = vol.data[nearest[:, 0], nearest[:, 1], nearest[:, 2]].reshape(target.dims)
    if isinstance(vol, LabelVolume):
        return LabelVolume(target, out)
    return ScalarVolume(target, out)


# ----------------------------- morphology ----------------------------------


def _as_binary(mask: LabelVolume) -> np.ndarray:
    data = mask.data
    if not np.all((data == 0) | (data == 1)):
        raise InvalidInputError("mask must be binary (labels 0/1)")
    return data.astype(bool)


def morphological_close(mask: LabelVolume, radius: int) -> LabelVolume:
    """Binary closing with the Chebyshev ball (cube) of the given voxel radius.

    The grid is padded before dilation so the outside counts as background;
    the result is the true closing, hence extensive and idempotent.
    """
    radius = int(radius)
    if radius < 1:
        raise InvalidInputError("closing radius must be >= 1")
    binary = _as_binary(mask)
    padded = np.pad(binary, radius, mode="constant", constant_values=False)
    dilated = ndimage.binary_dilation(padded, structure=_CROSS_26, iterations=radius)
    closed = ndimage.binary_erosion(dilated, structure=_CROSS_26, iterations=radius)
    out = closed[radius:-radius, radius:-radius, radius:-radius]
    return mask.with_data(out.astype(np.int32))


def fill_cavities(mask: LabelVolume) -> LabelVolume:
    """Fill background regions that do not reach the grid border (6-connected)."""
    binary = _as_binary(mask)
    filled = ndimage.binary_fill_holes(binary, structure=_CROSS_6)
    return mask.with_data(filled.astype(np.int32))


def largest_component(mask: LabelVolume) -> LabelVolume:
    """Keep only the largest 6-connected foreground component.

    Ties are broken by the lowest x-fastest linear index of each component's
    first voxel.
    """
    binary = _as_binary(mask)
    if not binary.any():
        raise InvalidInputError("largest_component of an empty mask")
    labels, count = ndimage.label(binary, structure=_CROSS_6)
    if count == 1:
        return mask.with_data(binary.astype(np.int32))
    sizes = np.bincount(labels.ravel())[1:]
    best = np.flatnonzero(sizes == sizes.max()) + 1
    if len(best) > 1:
        nx, ny, nz = mask.geometry.dims
        ii, jj, kk = np.nonzero(np.isin(labels, best))
        linear = ii + nx * (jj + ny * kk)
        first = np.full(count + 1, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(first, labels[ii, jj, kk], linear)
        winner = best[np.argmin(first[best])]
    else:
        winner = best[0]
    return mask.with_data((labels == winner).astype(np.int32))
