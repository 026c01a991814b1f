"""Energy-based surface placement onto the zero level set of an SDF volume.

The objective per vertex is a squashed-SDF fidelity term plus spring
regularizers that penalize neighbour offsets along the vertex normal and the
two tangent axes. Descent is plain gradient descent with a fixed step that
shrinks whenever a trial step self-intersects or fails to decrease the total
energy, so the accepted-step energy trace is non-increasing by construction.
Frames are frozen within a step and recomputed between steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FitStalledError, InvalidInputError
from .mesh import TriangleMesh, VertexFrame, self_intersections, vertex_frames
from .volume import ScalarVolume, sample_with_world_gradient


@dataclass(frozen=True)
class DeformConfig:
    """Weights and termination parameters of the surface fit."""

    lambda1: float = 0.0006  # normal spring weight
    lambda2: float = 0.0002  # tangential spring weight
    step_mm: float = 0.25
    max_iterations: int = 500
    convergence_rel: float = 1e-6
    convergence_window: int = 10
    shrink_factor: float = 0.5
    min_step_mm: float = 1e-3

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidInputError("spring weights must be >= 0")
        if not 0 < self.shrink_factor < 1:
            raise InvalidInputError("shrink factor must lie in (0, 1)")
        if not 0 < self.min_step_mm < self.step_mm:
            raise InvalidInputError("need 0 < min step < initial step")
        if self.max_iterations < 1 or self.convergence_window < 1:
            raise InvalidInputError("iteration parameters must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "DeformConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise InvalidInputError(f"unknown deform config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Raw term sums; total applies the spring weights."""

    fidelity: float
    normal_spring: float
    tangential_spring: float
    total: float


@dataclass(frozen=True)
class FitTraceRow:
    iteration: int
    step_mm: float
    energy: EnergyBreakdown
    intersections_found: int


@dataclass(frozen=True)
class FitResult:
    mesh: TriangleMesh
    trace: list = field(default_factory=list)
    converged: bool = False


def _check_domain(mesh: TriangleMesh, sdf: ScalarVolume):
    idx = sdf.geometry.world_to_index(mesh.vertices)
    upper = np.array(sdf.geometry.dims, dtype=np.float64) - 1.0
    if idx.min() < 0.0 or np.any(idx > upper):
        raise InvalidInputError("mesh extends outside the SDF grid")


def energy_with_gradient(
    mesh: TriangleMesh, sdf: ScalarVolume, frames: VertexFrame, cfg: DeformConfig
):
    """Energy breakdown and its analytic gradient with frames held fixed.

    Returns (breakdown, per-term gradient dict); the "total" gradient applies
    the spring weights.
    """
    _check_domain(mesh, sdf)
    x = mesh.vertices
    nv = mesh.n_vertices

    d, d_grad = sample_with_world_gradient(sdf, x)
    t = np.tanh(d)
    fidelity = float(np.sum(t * t))
    g_fid = (2.0 * t * (1.0 - t * t))[:, None] * d_grad

    v_idx, u_idx = mesh.directed_edges
    diff = x[v_idx] - x[u_idx]

    def spring(axis: np.ndarray):
        av = axis[v_idx]
        s = np.einsum("ij,ij->i", av, diff)
        term = float(np.sum(s * s))
        contrib = 2.0 * s[:, None] * av
        grad = np.zeros((nv, 3))
        for c in range(3):
            grad[:, c] = np.bincount(v_idx, weights=contrib[:, c], minlength=nv)
            grad[:, c] -= np.bincount(u_idx, weights=contrib[:, c], minlength=nv)
        return term, grad

    normal_term, g_norm = spring(frames.normals)
    tan1, g_t1 = spring(frames.e1)
    tan2, g_t2 = spring(frames.e2)
    tangential_term = tan1 + tan2
    g_tan = g_t1 + g_t2

    total = fidelity + cfg.lambda1 * normal_term + cfg.lambda2 * tangential_term
    breakdown = EnergyBreakdown(fidelity, normal_term, tangential_term, total)
    grads = {
        "fidelity": g_fid,
        "normal": g_norm,
        "tangential": g_tan,
        "total": g_fid + cfg.lambda1 * g_norm + cfg.lambda2 * g_tan,
    }
    return breakdown, grads


def energy(mesh: TriangleMesh, sdf: ScalarVolume, frames: VertexFrame, cfg: DeformConfig) -> EnergyBreakdown:
    """Eq.-style objective: squashed-SDF fidelity plus spring regularizers."""
    breakdown, _ = energy_with_gradient(mesh, sdf, frames, cfg)
    return breakdown


def fit_surface(init: TriangleMesh, sdf: ScalarVolume, cfg: DeformConfig | None = None) -> FitResult:
    """Descend the surface energy from ``init`` until convergence.

    Steps that self-intersect are reverted and retried with a smaller step;
    steps that would raise the recomputed total energy likewise. Stops on the
    convergence window, the iteration budget, or the minimum step; reaching
    the minimum step while every trial still intersects raises FitStalledError
    with the last good mesh attached.
    """
    cfg = cfg or DeformConfig()
    mesh = init.validate()
    step = cfg.step_mm

    frames = vertex_frames(mesh)
    breakdown, grads = energy_with_gradient(mesh, sdf, frames, cfg)
    trace: list[FitTraceRow] = [FitTraceRow(0, step, breakdown, len(self_intersections(mesh)))]
    energies = [breakdown.total]
    converged = False

    for iteration in range(1, cfg.max_iterations + 1):
        rejected_hits = 0
        accepted = None
        while True:
            trial = mesh.with_vertices(mesh.vertices - step * grads["total"])
            hits = self_intersections(trial)
            if len(hits):
                rejected_hits += len(hits)
                step *= cfg.shrink_factor
                if step < cfg.min_step_mm:
                    raise FitStalledError(
                        "minimum step reached while trial steps still self-intersect",
                        partial_mesh=mesh,
                        trace=trace,
                    )
                continue
            trial_frames = vertex_frames(trial)
            trial_breakdown, trial_grads = energy_with_gradient(trial, sdf, trial_frames, cfg)
            if trial_breakdown.total > energies[-1]:
                step *= cfg.shrink_factor
                if step < cfg.min_step_mm:
                    break  # cannot improve further at any allowed step
                continue
            accepted = (trial, trial_breakdown, trial_grads)
            break

        if accepted is None:
            break
        mesh, breakdown, grads = accepted
        energies.append(breakdown.total)
        trace.append(FitTraceRow(iteration, step, breakdown, rejected_hits))

        w = cfg.convergence_window
        if len(energies) > w:
            ref = energies[-1 - w]
            if ref - energies[-1] < cfg.convergence_rel * max(abs(ref), 1e-30):
                converged = True
                break

    return FitResult(mesh=mesh, trace=trace, converged=converged)


def fit_pial(wm_mesh: TriangleMesh, pial_sdf: ScalarVolume, cfg: DeformConfig | None = None) -> FitResult:
    """Fit the outer surface starting from the fitted inner mesh.

    Connectivity (and hence vertex correspondence) is preserved, which is what
    makes node-wise thickness measurements possible downstream.
    """
    result = fit_surface(wm_mesh, pial_sdf, cfg)
    assert result.mesh.triangles is wm_mesh.triangles or np.array_equal(
        result.mesh.triangles, wm_mesh.triangles
    )
    return result


def load_deform_config(path) -> DeformConfig:
    with open(path) as fh:
        return DeformConfig.from_dict(json.load(fh))
