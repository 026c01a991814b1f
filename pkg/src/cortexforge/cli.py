"""Command-line interface.

Subcommands: phantom, synth, sdf, recon, metrics, mesh, loss. Informational
output goes to stdout as JSON; errors are emitted as one JSON object on stderr
with exit codes 2 (invalid input), 3 (topology repair failed), 4 (fit
stalled), 5 (I/O). ``CORTEXFORGE_SEED`` overrides any configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import deform, metrics, synth
from .errors import CortexForgeError, FileFormatError, InvalidInputError
from .mesh import euler_characteristic, inflate, self_intersections, smooth
from .meshio import read_mesh, read_ply, write_mesh, write_ply
from .nifti import read_nifti, write_nifti
from .phantoms import make_phantom
from .pipeline import PipelineConfig, run_pipeline
from .sdf import LossSpec, clip_sdf, loss_report, mesh_to_sdf
from .volume import LabelVolume

SEED_ENV = "CORTEXFORGE_SEED"


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise InvalidInputError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


# ------------------------------ subcommands ---------------------------------


def _cmd_phantom(args) -> None:
    params = {}
    if args.kind == "sphere":
        params = {"radius": args.radius}
    elif args.kind == "concentric":
        params = {"inner_radius": args.inner, "outer_radius": args.outer}
    elif args.kind == "folded":
        params = {"base_radius": args.radius, "amplitude": args.amplitude, "frequency": args.frequency}
    phantom = make_phantom(
        args.kind, dims=(args.dims,) * 3, spacing_mm=args.spacing,
        subdivisions=args.subdivisions, **params,
    )
    write_nifti(args.out_labels, phantom.labels)
    names = sorted(phantom.sdfs)
    if args.out_sdf:
        if len(args.out_sdf) != len(names):
            raise InvalidInputError(f"phantom {args.kind!r} has fields {names}; pass one --out-sdf per field")
        for path, name in zip(args.out_sdf, names):
            write_nifti(path, phantom.sdfs[name])
    if args.out_mesh:
        mesh_names = sorted(phantom.meshes)
        if len(args.out_mesh) != len(mesh_names):
            raise InvalidInputError(f"phantom {args.kind!r} has meshes {mesh_names}; pass one --out-mesh per mesh")
        for path, name in zip(args.out_mesh, mesh_names):
            write_mesh(path, phantom.meshes[name])
    _emit({"kind": args.kind, "fields": names, "params": phantom.params})


def _cmd_synth(args) -> None:
    cfg = synth.SynthConfig.from_json(args.config) if args.config else synth.default_config()
    seed = _env_seed()
    if seed is None:
        seed = args.seed if args.seed is not None else cfg.seed
    if len(args.out_target) != len(args.sdf):
        raise InvalidInputError("need exactly one --out-target per --sdf input")
    labels = read_nifti(args.labels, as_labels=True)
    sdfs = [read_nifti(p) for p in args.sdf]
    image, targets = synth.generate_training_pair(labels, sdfs, cfg, seed=seed)
    write_nifti(args.out_image, image)
    for path, target in zip(args.out_target, targets):
        write_nifti(path, target)
    _emit({"seed": seed, "image": str(args.out_image), "targets": [str(p) for p in args.out_target]})


def _cmd_sdf(args) -> None:
    mesh = read_mesh(args.mesh)
    like = read_nifti(args.like)
    vol = mesh_to_sdf(mesh, like.geometry, max_distance=args.clip + 1.0 if args.clip else None)
    if args.clip:
        vol = clip_sdf(vol, args.clip)
    write_nifti(args.out, vol)
    _emit({"out": str(args.out), "clip_mm": args.clip, "triangles": mesh.n_triangles})


def _cmd_loss(args) -> None:
    pred = read_nifti(args.pred)
    target = read_nifti(args.target)
    spec = LossSpec(kind=args.kind, delta=args.delta)
    _emit(loss_report(pred, target, spec))


def _cmd_recon(args) -> None:
    config = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    seed = _env_seed()
    if seed is not None:
        config = PipelineConfig.from_dict({**config.to_dict(), "seed": seed})
    manifest = run_pipeline(
        args.wm_sdf,
        args.pial_sdf,
        args.wm_mask,
        config,
        out_wm=args.out_wm,
        out_pial=args.out_pial,
        trace_path=args.trace,
        manifest_path=args.manifest,
    )
    _emit(manifest.to_dict())


def _cmd_metrics(args) -> None:
    wm = read_mesh(args.wm).validate()
    pial = read_mesh(args.pial).validate()
    th = metrics.thickness(wm, pial)
    curv = metrics.curvature(wm)
    inflated = inflate(wm, args.inflate_iterations)
    depth = metrics.sulcal_depth(wm, inflated.normal_displacement)
    reference = read_mesh(args.reference).validate() if args.reference else pial
    report = metrics.surface_distance(wm, reference)
    if args.out_scalars:
        write_ply(
            args.out_scalars,
            wm,
            {
                "thickness_mm": th.values,
                "sulcal_depth_mm": depth.values,
                "curvature_per_mm": curv.values,
            },
        )
    _emit(
        {
            "aad_mm": report.aad_mm,
            "hd90_mm": report.hd90_mm,
            "thickness_mean_mm": float(th.values.mean()),
            "thickness_std_mm": float(th.values.std()),
            "curvature_mean": float(curv.values.mean()),
            "depth_std": float(depth.values.std()),
        }
    )


def _cmd_mesh(args) -> None:
    mesh = read_mesh(args.mesh)
    if args.mesh_cmd == "euler":
        _emit({"euler_characteristic": euler_characteristic(mesh),
               "vertices": mesh.n_vertices, "triangles": mesh.n_triangles})
    elif args.mesh_cmd == "selfx":
        pairs = self_intersections(mesh)
        _emit({"intersecting_pairs": [[int(a), int(b)] for a, b in pairs], "count": len(pairs)})
    elif args.mesh_cmd == "smooth":
        out = smooth(mesh, args.iterations, args.lam, args.mu)
        write_mesh(args.out, out)
        _emit({"out": str(args.out), "iterations": args.iterations})
    elif args.mesh_cmd == "inflate":
        result = inflate(mesh.validate(), args.iterations)
        write_ply(args.out, result.mesh, {"inflation_displacement_mm": result.normal_displacement})
        _emit({"out": str(args.out), "iterations": args.iterations})


# --------------------------------- parser -----------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cortexforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate an analytic test phantom")
    p.add_argument("--kind", required=True, choices=("sphere", "concentric", "folded"))
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=12.0)
    p.add_argument("--inner", type=float, default=12.0)
    p.add_argument("--outer", type=float, default=15.0)
    p.add_argument("--amplitude", type=float, default=1.5)
    p.add_argument("--frequency", type=int, default=6)
    p.add_argument("--subdivisions", type=int, default=4)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--out-sdf", nargs="*", default=[])
    p.add_argument("--out-mesh", nargs="*", default=[])
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("synth", help="generate one synthetic training pair")
    p.add_argument("--labels", required=True)
    p.add_argument("--sdf", nargs="+", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-target", nargs="+", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("sdf", help="signed distance volume from a mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--like", required=True, help="NIfTI volume defining the output grid")
    p.add_argument("--clip", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sdf)

    p = sub.add_parser("loss", help="voxelwise loss between two SDF volumes")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--kind", default="l2", choices=("l1", "l2", "huber"))
    p.add_argument("--delta", type=float, default=1.0)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("recon", help="surface reconstruction pipeline")
    p.add_argument("--wm-sdf", required=True)
    p.add_argument("--pial-sdf", required=True)
    p.add_argument("--wm-mask", required=True)
    p.add_argument("--config")
    p.add_argument("--out-wm", required=True)
    p.add_argument("--out-pial", required=True)
    p.add_argument("--trace")
    p.add_argument("--manifest")
    p.set_defaults(func=_cmd_recon)

    p = sub.add_parser("metrics", help="cortical metrics and surface distances")
    p.add_argument("--wm", required=True)
    p.add_argument("--pial", required=True)
    p.add_argument("--reference", help="mesh for AAD/HD90 (default: the pial)")
    p.add_argument("--inflate-iterations", type=int, default=20)
    p.add_argument("--out-scalars", help="PLY with per-vertex scalar properties")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("mesh", help="mesh utilities")
    msub = p.add_subparsers(dest="mesh_cmd", required=True)
    for name in ("euler", "selfx"):
        mp = msub.add_parser(name)
        mp.add_argument("--mesh", required=True)
        mp.set_defaults(func=_cmd_mesh)
    mp = msub.add_parser("smooth")
    mp.add_argument("--mesh", required=True)
    mp.add_argument("--out", required=True)
    mp.add_argument("--iterations", type=int, default=10)
    mp.add_argument("--lam", type=float, default=0.5)
    mp.add_argument("--mu", type=float, default=-0.53)
    mp.set_defaults(func=_cmd_mesh)
    mp = msub.add_parser("inflate")
    mp.add_argument("--mesh", required=True)
    mp.add_argument("--out", required=True)
    mp.add_argument("--iterations", type=int, default=20)
    mp.set_defaults(func=_cmd_mesh)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CortexForgeError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return exc.exit_code
    except OSError as exc:
        json.dump({"error": "OSError", "message": str(exc), "exit_code": FileFormatError.exit_code}, sys.stderr)
        sys.stderr.write("\n")
        return FileFormatError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
