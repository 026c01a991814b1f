"""End-to-end reconstruction: repaired mask -> tessellation -> smoothing ->
WM fit -> pial fit -> metrics, with a reproducibility manifest.

The manifest records inputs, a canonical hash of the configuration, the seed,
per-stage timings and the metric summary; everything except the timings is
reproducible bit-for-bit from the same inputs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deform import DeformConfig, FitResult, fit_pial, fit_surface
from .errors import InvalidInputError
from .mesh import ensure_genus_zero, euler_characteristic, inflate, self_intersections, smooth
from .meshio import write_ply
from .metrics import curvature, sulcal_depth, thickness
from .nifti import read_nifti
from .volume import LabelVolume, ScalarVolume


@dataclass(frozen=True)
class SmoothConfig:
    iterations: int = 10
    lam: float = 0.5
    mu: float = -0.53

    @classmethod
    def from_dict(cls, raw: dict) -> "SmoothConfig":
        unknown = set(raw) - {"iterations", "lam", "mu"}
        if unknown:
            raise InvalidInputError(f"unknown smooth config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    smooth: SmoothConfig = field(default_factory=SmoothConfig)
    deform: DeformConfig = field(default_factory=DeformConfig)
    repair_rounds: int = 5
    inflate_iterations: int = 20

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        known = {"seed", "smooth", "deform", "repair_rounds", "inflate_iterations"}
        unknown = set(raw) - known
        if unknown:
            raise InvalidInputError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(
            seed=raw.get("seed", 0),
            smooth=SmoothConfig.from_dict(raw.get("smooth", {})),
            deform=DeformConfig.from_dict(raw.get("deform", {})),
            repair_rounds=raw.get("repair_rounds", 5),
            inflate_iterations=raw.get("inflate_iterations", 20),
        )

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "smooth": {"iterations": self.smooth.iterations, "lam": self.smooth.lam, "mu": self.smooth.mu},
            "deform": {f: getattr(self.deform, f) for f in self.deform.__dataclass_fields__},
            "repair_rounds": self.repair_rounds,
            "inflate_iterations": self.inflate_iterations,
        }


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class PipelineManifest:
    inputs: dict
    outputs: dict
    config_hash: str
    seed: int
    timings_ms: dict
    metrics: dict

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs,
            "outputs": self.outputs,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "timings_ms": self.timings_ms,
            "metrics": self.metrics,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


def _trace_rows(result: FitResult, surface: str):
    for row in result.trace:
        yield (
            surface,
            row.iteration,
            row.step_mm,
            row.energy.fidelity,
            row.energy.normal_spring,
            row.energy.tangential_spring,
            row.energy.total,
            row.intersections_found,
        )


def write_trace_csv(path, wm: FitResult, pial: FitResult) -> None:
    lines = ["surface,iteration,step,fidelity,normal,tangential,total,intersections_found\n"]
    for result, name in ((wm, "wm"), (pial, "pial")):
        for row in _trace_rows(result, name):
            lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    Path(path).write_text("".join(lines))


class _StageTimer:
    def __init__(self):
        self.timings: dict[str, float] = {}
        self._t0 = None
        self._name = None

    def start(self, name: str):
        self._name = name
        self._t0 = time.perf_counter()

    def stop(self):
        self.timings[self._name] = round((time.perf_counter() - self._t0) * 1e3, 3)


def reconstruct(
    wm_sdf: ScalarVolume,
    pial_sdf: ScalarVolume,
    wm_mask: LabelVolume,
    config: PipelineConfig | None = None,
):
    """Core reconstruction on in-memory volumes.

    Returns (wm fit, pial fit, scalars dict, metrics summary, timings); the
    caller handles file I/O and the manifest.
    """
    config = config or PipelineConfig()
    if not (wm_sdf.geometry.same_grid(pial_sdf.geometry) and wm_sdf.geometry.same_grid(wm_mask.geometry)):
        raise InvalidInputError("pipeline inputs must share one grid")

    timer = _StageTimer()

    timer.start("repair")
    repaired_mask, repaired_mesh = ensure_genus_zero(wm_mask, max_rounds=config.repair_rounds)
    timer.stop()

    timer.start("smooth")
    iterations = config.smooth.iterations
    smoothed = smooth(repaired_mesh, iterations, config.smooth.lam, config.smooth.mu)
    # smoothing must not introduce self-intersections; back off if it does
    while iterations > 0 and len(self_intersections(smoothed)):
        iterations //= 2
        smoothed = smooth(repaired_mesh, iterations, config.smooth.lam, config.smooth.mu)
    timer.stop()

    timer.start("fit_wm")
    wm_fit = fit_surface(smoothed, wm_sdf, config.deform)
    timer.stop()

    timer.start("fit_pial")
    pial_fit = fit_pial(wm_fit.mesh, pial_sdf, config.deform)
    timer.stop()

    timer.start("metrics")
    th = thickness(wm_fit.mesh, pial_fit.mesh)
    curv = curvature(wm_fit.mesh)
    inflated = inflate(wm_fit.mesh, config.inflate_iterations)
    depth = sulcal_depth(wm_fit.mesh, inflated.normal_displacement)
    wm_chi = euler_characteristic(wm_fit.mesh)
    pial_chi = euler_characteristic(pial_fit.mesh)
    n_self = len(self_intersections(wm_fit.mesh)) + len(self_intersections(pial_fit.mesh))
    summary = {
        "thickness_mean_mm": float(th.values.mean()),
        "thickness_std_mm": float(th.values.std()),
        "curvature_mean": float(curv.values.mean()),
        "depth_std": float(depth.values.std()),
        "euler_wm": wm_chi,
        "euler_pial": pial_chi,
        "self_intersections": int(n_self),
        "wm_iterations": len(wm_fit.trace) - 1,
        "pial_iterations": len(pial_fit.trace) - 1,
    }
    timer.stop()

    scalars = {
        "thickness_mm": th.values,
        "sulcal_depth_mm": depth.values,
        "curvature_per_mm": curv.values,
    }
    return wm_fit, pial_fit, scalars, summary, timer.timings


def run_pipeline(
    wm_sdf_path,
    pial_sdf_path,
    wm_mask_path,
    config: PipelineConfig | None = None,
    *,
    out_wm,
    out_pial,
    trace_path=None,
    manifest_path=None,
) -> PipelineManifest:
    """File-level pipeline: read NIfTI inputs, reconstruct, write artifacts.

    Any stage failure propagates with its stage recorded in the exception
    message; partial artifacts already written stay on disk.
    """
    config = config or PipelineConfig()
    timer = _StageTimer()

    timer.start("load")
    wm_sdf = read_nifti(wm_sdf_path)
    pial_sdf = read_nifti(pial_sdf_path)
    wm_mask = read_nifti(wm_mask_path, as_labels=True)
    timer.stop()

    wm_fit, pial_fit, scalars, summary, stage_timings = reconstruct(wm_sdf, pial_sdf, wm_mask, config)

    timer.start("write")
    write_ply(out_wm, wm_fit.mesh, scalars)
    write_ply(out_pial, pial_fit.mesh, {"thickness_mm": scalars["thickness_mm"]})
    outputs = {"wm": str(out_wm), "pial": str(out_pial)}
    if trace_path is not None:
        write_trace_csv(trace_path, wm_fit, pial_fit)
        outputs["trace"] = str(trace_path)
    timer.stop()

    manifest = PipelineManifest(
        inputs={
            "wm_sdf": str(wm_sdf_path),
            "pial_sdf": str(pial_sdf_path),
            "wm_mask": str(wm_mask_path),
        },
        outputs=outputs,
        config_hash=config_hash(config),
        seed=config.seed,
        timings_ms={**timer.timings, **stage_timings},
        metrics=summary,
    )
    if manifest_path is not None:
        manifest.write(manifest_path)
    return manifest
