"""Domain-randomization generative model for synthetic training pairs.

From a label map and ground-truth SDF volumes it produces a randomized
synthetic scan plus spatially corresponding SDF targets: random affine and
smooth nonlinear warps, per-label Gaussian intensities, multiplicative bias,
slice spacing / thickness simulation with noise, and trilinear upsampling back
to the 1 mm grid. One seed fully determines one sample; each stage draws from
its own salted substream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .rng import (
    STAGE_ACQUISITION,
    STAGE_AFFINE,
    STAGE_BIAS,
    STAGE_GMM,
    STAGE_NOISE,
    STAGE_WARP,
    stage_rng,
)
from .sdf import SdfVolume, clip_sdf
from .volume import GridGeometry, LabelVolume, ScalarVolume, _trilinear_gather

ORIENTATIONS = ("axial", "coronal", "sagittal", "isotropic")
_SLICE_AXIS = {"sagittal": 0, "coronal": 1, "axial": 2}
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

SDF_CLIP_MM = 5.0


def _interval(value, name, allow_negative=True) -> tuple[float, float]:
    lo, hi = (float(value[0]), float(value[1]))
    if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
        raise InvalidInputError(f"{name} must be a closed interval lo <= hi, got {value}")
    if not allow_negative and lo < 0:
        raise InvalidInputError(f"{name} must be non-negative")
    return lo, hi


@dataclass(frozen=True)
class AffineSpec:
    """Sampling ranges of the random affine: rotation (deg), translation (mm),
    per-axis scaling, and shear coefficients."""

    rotation_deg: tuple = ((0.0, 0.0),) * 3
    translation_mm: tuple = ((0.0, 0.0),) * 3
    scaling: tuple = ((1.0, 1.0),) * 3
    shear: tuple = (0.0, 0.0)

    def __post_init__(self):
        rot = tuple(_interval(r, "rotation range") for r in self.rotation_deg)
        tra = tuple(_interval(t, "translation range") for t in self.translation_mm)
        sca = tuple(_interval(s, "scaling range") for s in self.scaling)
        for lo, hi in sca:
            if lo <= 0.0 <= hi:
                raise InvalidInputError("scaling intervals must exclude 0")
        shear = _interval(self.shear, "shear range")
        object.__setattr__(self, "rotation_deg", rot)
        object.__setattr__(self, "translation_mm", tra)
        object.__setattr__(self, "scaling", sca)
        object.__setattr__(self, "shear", shear)


@dataclass(frozen=True)
class WarpSpec:
    """Nonlinear warp: coarse control spacing (mm) and displacement std (mm)."""

    control_spacing_mm: float = 20.0
    displacement_std_mm: float = 0.0

    def __post_init__(self):
        if self.control_spacing_mm <= 0:
            raise InvalidInputError("control spacing must be positive")
        if self.displacement_std_mm < 0:
            raise InvalidInputError("displacement std must be >= 0")

    def check_against(self, spacing: tuple[float, float, float]):
        if self.control_spacing_mm < 2.0 * max(spacing):
            raise InvalidInputError(
                "warp control spacing must be at least twice the target voxel spacing"
            )


@dataclass(frozen=True)
class GmmSpec:
    """Per-label mean and std sampling intervals for synthetic intensities."""

    label_params: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for label, entry in self.label_params.items():
            mean_iv = _interval(entry[0], f"label {label} mean interval")
            std_iv = _interval(entry[1], f"label {label} std interval", allow_negative=False)
            clean[int(label)] = (mean_iv, std_iv)
        object.__setattr__(self, "label_params", clean)

    def require(self, labels) -> None:
        missing = sorted(set(int(l) for l in labels) - set(self.label_params))
        if missing:
            raise InvalidInputError(f"labels missing from GMM spec: {missing}")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Slice geometry simulation: orientation, spacing interval, thickness rule.

    ``orientation`` may be one of axial/coronal/sagittal/isotropic or
    "random", which draws uniformly among the four per sample. Thickness is
    always drawn from [1, min(5, spacing)].
    """

    orientation: str = "random"
    spacing_mm: tuple = (1.0, 9.0)

    def __post_init__(self):
        orientation = self.orientation.lower()
        if orientation not in ORIENTATIONS + ("random",):
            raise InvalidInputError(f"unknown orientation {self.orientation!r}")
        spacing = _interval(self.spacing_mm, "spacing interval")
        if spacing[0] < 1.0 or spacing[1] > 9.0:
            raise InvalidInputError("spacing interval must lie within [1, 9] mm")
        object.__setattr__(self, "orientation", orientation)
        object.__setattr__(self, "spacing_mm", spacing)


@dataclass(frozen=True)
class SynthConfig:
    """Aggregate sampling ranges of the generative model; seed-deterministic."""

    affine: AffineSpec = field(default_factory=AffineSpec)
    warp: WarpSpec = field(default_factory=WarpSpec)
    gmm: GmmSpec = field(default_factory=GmmSpec)
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    bias_amplitude: tuple = (0.0, 0.3)
    bias_control_spacing_mm: float = 40.0
    noise_std: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bias_amplitude", _interval(self.bias_amplitude, "bias amplitude", allow_negative=False))
        object.__setattr__(self, "noise_std", _interval(self.noise_std, "noise std", allow_negative=False))
        if self.bias_control_spacing_mm <= 0:
            raise InvalidInputError("bias control spacing must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be a u64")

    # ------------------------------ JSON mirror -----------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        known = {
            "affine", "warp", "gmm", "acquisition",
            "bias_amplitude", "bias_control_spacing_mm", "noise_std", "seed",
        }
        unknown = set(raw) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")

        def sub(key, keys, builder):
            entry = raw.get(key, {})
            extra = set(entry) - set(keys)
            if extra:
                raise InvalidInputError(f"unknown {key} keys: {sorted(extra)}")
            return builder(entry)

        affine = sub(
            "affine",
            ("rotation_deg", "translation_mm", "scaling", "shear"),
            lambda e: AffineSpec(
                rotation_deg=tuple(tuple(r) for r in e.get("rotation_deg", ((0, 0),) * 3)),
                translation_mm=tuple(tuple(t) for t in e.get("translation_mm", ((0, 0),) * 3)),
                scaling=tuple(tuple(s) for s in e.get("scaling", ((1, 1),) * 3)),
                shear=tuple(e.get("shear", (0, 0))),
            ),
        )
        warp = sub(
            "warp",
            ("control_spacing_mm", "displacement_std_mm"),
            lambda e: WarpSpec(
                control_spacing_mm=e.get("control_spacing_mm", 20.0),
                displacement_std_mm=e.get("displacement_std_mm", 0.0),
            ),
        )
        gmm = GmmSpec(
            label_params={
                int(k): (tuple(v[0]), tuple(v[1])) for k, v in raw.get("gmm", {}).items()
            }
        )
        acquisition = sub(
            "acquisition",
            ("orientation", "spacing_mm"),
            lambda e: AcquisitionSpec(
                orientation=e.get("orientation", "random"),
                spacing_mm=tuple(e.get("spacing_mm", (1.0, 9.0))),
            ),
        )
        return cls(
            affine=affine,
            warp=warp,
            gmm=gmm,
            acquisition=acquisition,
            bias_amplitude=tuple(raw.get("bias_amplitude", (0.0, 0.3))),
            bias_control_spacing_mm=raw.get("bias_control_spacing_mm", 40.0),
            noise_std=tuple(raw.get("noise_std", (0.0, 0.0))),
            seed=raw.get("seed", 0),
        )

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "affine": {
                "rotation_deg": [list(r) for r in self.affine.rotation_deg],
                "translation_mm": [list(t) for t in self.affine.translation_mm],
                "scaling": [list(s) for s in self.affine.scaling],
                "shear": list(self.affine.shear),
            },
            "warp": {
                "control_spacing_mm": self.warp.control_spacing_mm,
                "displacement_std_mm": self.warp.displacement_std_mm,
            },
            "gmm": {
                str(k): [list(v[0]), list(v[1])] for k, v in self.gmm.label_params.items()
            },
            "acquisition": {
                "orientation": self.acquisition.orientation,
                "spacing_mm": list(self.acquisition.spacing_mm),
            },
            "bias_amplitude": list(self.bias_amplitude),
            "bias_control_spacing_mm": self.bias_control_spacing_mm,
            "noise_std": list(self.noise_std),
            "seed": self.seed,
        }


def default_config() -> SynthConfig:
    """Shipped defaults (see configs/synth_default.json); the GMM and warp
    ranges are package defaults, not values asserted by any publication."""
    with resources.files("cortexforge").joinpath("configs/synth_default.json").open() as fh:
        return SynthConfig.from_dict(json.load(fh))


# ----------------------------- transforms -----------------------------------


class CoarseField:
    """Zero-mean Gaussian random field on a coarse grid, trilinearly upsampled.

    Values interpolate the coarse samples, so the fine-grid magnitude never
    exceeds the coarse-grid maximum (convex combinations).
    """

    def __init__(self, geometry: GridGeometry, control_spacing_mm: float, std: float,
                 rng: np.random.Generator, channels: int = 1):
        corners = geometry.index_to_world(
            np.array([[i, j, k] for i in (0, geometry.dims[0] - 1)
                      for j in (0, geometry.dims[1] - 1)
                      for k in (0, geometry.dims[2] - 1)], dtype=np.float64)
        )
        lo = corners.min(axis=0) - control_spacing_mm
        hi = corners.max(axis=0) + control_spacing_mm
        n = np.maximum(np.ceil((hi - lo) / control_spacing_mm).astype(int) + 1, 2)
        self.origin = lo
        self.spacing = control_spacing_mm
        self.values = rng.normal(0.0, std, size=(channels, *n)) if std > 0 else np.zeros((channels, *n))
        self.channels = channels

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        idx = (np.asarray(pts, dtype=np.float64) - self.origin) / self.spacing
        out = np.empty((len(idx), self.channels))
        for c in range(self.channels):
            out[:, c] = _trilinear_gather(self.values[c], idx)
        return out[:, 0] if self.channels == 1 else out


class CompositeTransform:
    """World-point map phi(x) = A(x + u(x)): nonlinear displacement, then affine."""

    def __init__(self, affine: np.ndarray, displacement: CoarseField | None):
        self.affine = np.asarray(affine, dtype=np.float64)
        self.displacement = displacement

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        if self.displacement is not None:
            pts = pts + self.displacement(pts)
        return pts @ self.affine[:3, :3].T + self.affine[:3, 3]


def _rotation_matrix(angles_deg: np.ndarray) -> np.ndarray:
    rx, ry, rz = np.deg2rad(angles_deg)
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def sample_affine_matrix(spec: AffineSpec, rng: np.random.Generator, pivot: np.ndarray) -> np.ndarray:
    """Random affine about the pivot: rotate, shear, scale, then translate."""
    angles = np.array([rng.uniform(lo, hi) for lo, hi in spec.rotation_deg])
    translation = np.array([rng.uniform(lo, hi) for lo, hi in spec.translation_mm])
    scales = np.array([rng.uniform(lo, hi) for lo, hi in spec.scaling])
    shears = np.array([rng.uniform(*spec.shear) for _ in range(3)])

    shear = np.eye(3)
    shear[0, 1], shear[0, 2], shear[1, 2] = shears
    linear = _rotation_matrix(angles) @ shear @ np.diag(scales)
    affine = np.eye(4)
    affine[:3, :3] = linear
    affine[:3, 3] = pivot - linear @ pivot + translation
    return affine


def sample_transform(
    cfg: SynthConfig,
    rng: np.random.Generator,
    geometry: GridGeometry,
    warp_rng: np.random.Generator | None = None,
) -> CompositeTransform:
    """Draw the composite warp phi = phi_aff o phi_nonlinear for one sample.

    The displacement field is i.i.d. zero-mean Gaussian on the coarse control
    grid, trilinearly upsampled; the affine pivots about the grid center.
    """
    cfg.warp.check_against(geometry.spacing)
    corners = geometry.index_to_world(
        np.array([[0, 0, 0], [d - 1 for d in geometry.dims]], dtype=np.float64)
    )
    pivot = corners.mean(axis=0)
    affine = sample_affine_matrix(cfg.affine, rng, pivot)
    displacement = None
    if cfg.warp.displacement_std_mm > 0:
        displacement = CoarseField(
            geometry,
            cfg.warp.control_spacing_mm,
            cfg.warp.displacement_std_mm,
            warp_rng if warp_rng is not None else rng,
            channels=3,
        )
    return CompositeTransform(affine, displacement)


def warp_pair(labels: LabelVolume, sdfs: list[ScalarVolume], phi: CompositeTransform):
    """Backward-warp labels (nearest) and SDFs (trilinear) through the same phi."""
    for s in sdfs:
        if not s.geometry.same_grid(labels.geometry):
            raise InvalidInputError("labels and SDFs must share one grid")
    geometry = labels.geometry
    pts = geometry.voxel_centers_world().reshape(-1, 3)
    src = phi(pts)
    idx = geometry.world_to_index(src)

    nx, ny, nz = geometry.dims
    nearest = np.rint(idx).astype(np.int64)
    nearest[:, 0] = np.clip(nearest[:, 0], 0, nx - 1)
    nearest[:, 1] = np.clip(nearest[:, 1], 0, ny - 1)
    nearest[:, 2] = np.clip(nearest[:, 2], 0, nz - 1)
    warped_labels = labels.with_data(
        labels.data[nearest[:, 0], nearest[:, 1], nearest[:, 2]].reshape(geometry.dims)
    )
    warped_sdfs = [
        SdfVolume(geometry, _trilinear_gather(s.data, idx).reshape(geometry.dims)) for s in sdfs
    ]
    return warped_labels, warped_sdfs


# ----------------------------- intensities ----------------------------------


def _minmax(data: np.ndarray) -> np.ndarray:
    lo = data.min()
    hi = data.max()
    if hi > lo:
        return (data - lo) / (hi - lo)
    return np.zeros_like(data)


def synth_intensities(labels: LabelVolume, gmm: GmmSpec, rng: np.random.Generator) -> ScalarVolume:
    """Per-label Gaussian intensities, min-max normalized to [0, 1].

    One (mean, std) pair is drawn per label per sample, then every voxel draws
    independently from its label's Gaussian.
    """
    present = labels.labels()
    gmm.require(present)
    mu = np.zeros(labels.geometry.dims)
    sigma = np.zeros(labels.geometry.dims)
    for label in sorted(int(l) for l in present):
        mean_iv, std_iv = gmm.label_params[label]
        m = rng.uniform(*mean_iv)
        s = rng.uniform(*std_iv)
        where = labels.data == label
        mu[where] = m
        sigma[where] = s
    noise = rng.standard_normal(labels.geometry.dims)
    return ScalarVolume(labels.geometry, _minmax(mu + sigma * noise))


def apply_bias(vol: ScalarVolume, cfg: SynthConfig, rng: np.random.Generator) -> ScalarVolume:
    """Multiply by exp(B(x)) with B a coarse zero-mean Gaussian log-field,
    then re-normalize to [0, 1]."""
    if vol.data.min() < 0:
        raise InvalidInputError("bias field expects a non-negative volume")
    amplitude = rng.uniform(*cfg.bias_amplitude)
    field = CoarseField(vol.geometry, cfg.bias_control_spacing_mm, amplitude, rng, channels=1)
    pts = vol.geometry.voxel_centers_world().reshape(-1, 3)
    log_bias = field(pts).reshape(vol.geometry.dims)
    return vol.with_data(_minmax(vol.data * np.exp(log_bias)))


# ----------------------------- acquisition ----------------------------------


def gaussian_slice_kernel(thickness_mm: float, spacing_mm: float = 1.0) -> np.ndarray:
    """Unit-sum Gaussian taps with FWHM = thickness, truncated at 3 sigma."""
    sigma = thickness_mm * FWHM_TO_SIGMA / spacing_mm
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def _linear_resample_axis(data: np.ndarray, axis: int, positions: np.ndarray) -> np.ndarray:
    """1D linear interpolation along one axis at fractional index positions."""
    n = data.shape[axis]
    pos = np.clip(positions, 0.0, n - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(n - 2, 0))
    t = pos - i0
    i1 = np.minimum(i0 + 1, n - 1)
    lo = np.take(data, i0, axis=axis)
    hi = np.take(data, i1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = len(pos)
    t = t.reshape(shape)
    return lo * (1 - t) + hi * t


def simulate_acquisition(
    vol: ScalarVolume,
    orientation: str,
    spacing_mm: float,
    thickness_mm: float,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> ScalarVolume:
    """Slice-direction blur, decimation, noise, and trilinear upsampling to 1mm.

    The through-slice kernel is Gaussian with FWHM = thickness (unit sum);
    noise is added once on the decimated grid. Isotropic orientation applies
    blur and decimation to all three axes.
    """
    orientation = orientation.lower()
    if orientation not in ORIENTATIONS:
        raise InvalidInputError(f"unknown orientation {orientation!r}")
    if not 1.0 <= spacing_mm <= 9.0:
        raise InvalidInputError(f"spacing must lie in [1, 9] mm, got {spacing_mm}")
    limit = min(5.0, spacing_mm)
    if not 1.0 <= thickness_mm <= limit:
        raise InvalidInputError(
            f"thickness must lie in [1, min(5, spacing)] = [1, {limit}], got {thickness_mm}"
        )
    if noise_std < 0:
        raise InvalidInputError("noise std must be >= 0")
    if noise_std > 0 and rng is None:
        raise InvalidInputError("noise requires an rng")

    axes = (0, 1, 2) if orientation == "isotropic" else (_SLICE_AXIS[orientation],)
    fine_dims = vol.geometry.dims
    kernel = gaussian_slice_kernel(thickness_mm)
    data = vol.data
    for axis in axes:
        data = ndimage.convolve1d(data, kernel, axis=axis, mode="nearest")
        n_slices = int(np.floor((fine_dims[axis] - 1) / spacing_mm)) + 1
        data = _linear_resample_axis(data, axis, np.arange(n_slices) * spacing_mm)
    if noise_std > 0:
        data = data + rng.normal(0.0, noise_std, size=data.shape)
    for axis in axes:
        data = _linear_resample_axis(data, axis, np.arange(fine_dims[axis]) / spacing_mm)
    return vol.with_data(data)


def sample_acquisition(cfg: SynthConfig, rng: np.random.Generator):
    """Draw (orientation, spacing, thickness, noise std) for one sample."""
    if cfg.acquisition.orientation == "random":
        orientation = ORIENTATIONS[rng.integers(0, len(ORIENTATIONS))]
    else:
        orientation = cfg.acquisition.orientation
    spacing = rng.uniform(*cfg.acquisition.spacing_mm)
    thickness = rng.uniform(1.0, min(5.0, spacing))
    noise = rng.uniform(*cfg.noise_std)
    return orientation, float(spacing), float(thickness), float(noise)


# ------------------------------ full chain ----------------------------------


def generate_training_pair(labels: LabelVolume, sdfs: list[ScalarVolume], cfg: SynthConfig,
                           seed: int | None = None):
    """One synthetic (image, clipped SDF targets) pair, fully seed-determined."""
    spacing = labels.geometry.spacing
    if not np.allclose(spacing, 1.0, atol=1e-6):
        raise InvalidInputError("generative model expects 1 mm isotropic inputs")
    seed = cfg.seed if seed is None else int(seed)

    phi = sample_transform(
        cfg, stage_rng(seed, STAGE_AFFINE), labels.geometry, warp_rng=stage_rng(seed, STAGE_WARP)
    )
    warped_labels, warped_sdfs = warp_pair(labels, sdfs, phi)
    image = synth_intensities(warped_labels, cfg.gmm, stage_rng(seed, STAGE_GMM))
    image = apply_bias(image, cfg, stage_rng(seed, STAGE_BIAS))
    orientation, spacing_mm, thickness_mm, noise_std = sample_acquisition(
        cfg, stage_rng(seed, STAGE_ACQUISITION)
    )
    image = simulate_acquisition(
        image, orientation, spacing_mm, thickness_mm, noise_std, stage_rng(seed, STAGE_NOISE)
    )
    targets = [clip_sdf(s, SDF_CLIP_MM) for s in warped_sdfs]
    return image, targets
