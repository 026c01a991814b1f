"""Synthetic MRI generation and SDF-driven cortical surface reconstruction."""

from .deform import DeformConfig, EnergyBreakdown, energy, fit_pial, fit_surface
from .mesh import (
    TriangleMesh,
    VertexFrame,
    ensure_genus_zero,
    euler_characteristic,
    inflate,
    self_intersections,
    smooth,
    tessellate,
    vertex_frames,
)
from .metrics import DistanceReport, SurfaceScalars, curvature, sulcal_depth, surface_distance, thickness
from .phantoms import Phantom, icosphere, make_phantom
from .pipeline import PipelineConfig, PipelineManifest, run_pipeline
from .sdf import LossSpec, SdfVolume, clip_sdf, mesh_to_sdf, sdf_loss
from .synth import (
    AcquisitionSpec,
    AffineSpec,
    GmmSpec,
    SynthConfig,
    WarpSpec,
    generate_training_pair,
    sample_transform,
    simulate_acquisition,
    synth_intensities,
    warp_pair,
)
from .volume import (
    GridGeometry,
    LabelVolume,
    ScalarVolume,
    largest_component,
    morphological_close,
    resample,
    trilinear_sample,
)

__version__ = "0.1.0"
