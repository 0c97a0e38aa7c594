"""Command-line entry point.

Subcommands: generate, train, segment, reconstruct, interpolate, report.
Configuration comes from an optional TOML file plus flag overrides (flags
win). Every command writes a run manifest with the package version, the
resolved configuration and its hash, and timings. Exit codes: 0 success,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__, hierarchy, interpolation, mesh_io, mfa, model_io, synthetic
from .errors import IndexOutOfRange, InputError, NumericalError


@dataclass
class Config:
    m_init: int = 2
    tol: float = 1e-7
    max_iter: int = 200
    refine_threshold: float = 1e-5
    seed: int = 0
    joint_point_mode: str = "vertex-mean"
    out: str = "."

    def validate(self):
        if self.tol <= 0 or self.refine_threshold <= 0:
            raise InputError("tolerances must be positive")
        if self.max_iter < 1 or self.m_init < 1:
            raise InputError("m_init and max_iter must be >= 1")
        if self.joint_point_mode not in ("vertex-mean", "centroid-mean"):
            raise InputError(f"unknown joint point mode {self.joint_point_mode!r}")


def load_config(path: str | None, overrides: dict) -> Config:
    values = {}
    if path:
        try:
            with open(path, "rb") as fh:
                values.update(tomllib.load(fh))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f for f in Config.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    cfg = Config(**values)
    cfg.validate()
    return cfg


def write_manifest(out_dir: str, command: str, cfg: Config, timings: dict):
    cfg_dict = asdict(cfg)
    blob = json.dumps(cfg_dict, sort_keys=True).encode()
    manifest = {
        "command": command,
        "posemfa_version": __version__,
        "numpy_version": np.__version__,
        "config": cfg_dict,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "timings_s": timings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _artifact_from_fit(tset, model, latent):
    return model_io.ModelArtifact(
        model=model, latent=latent, triangles=tset.triangles,
        scale_record=tset.scale_record, vertices=tset.vertex_array())


def cmd_generate(args, cfg: Config) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    spec = synthetic.default_chain_spec(noise_sigma=args.noise, rng_seed=cfg.seed)
    tset, truth = synthetic.generate_chain(spec)
    for i, shape in enumerate(tset.shapes):
        mesh_io.write_obj(shape, os.path.join(cfg.out, f"shape_{i:03d}.obj"))
    with open(os.path.join(cfg.out, "ground_truth.labels"), "w") as fh:
        fh.write("\n".join(str(l) for l in truth.labels) + "\n")
    np.savez(os.path.join(cfg.out, "ground_truth.npz"),
             labels=truth.labels, rotations=truth.rotations,
             translations=truth.translations, reference=truth.reference,
             pivots=truth.pivots)
    write_manifest(cfg.out, "generate", cfg,
                   {"total": time.perf_counter() - t0})
    print(f"wrote {tset.n_s} shapes ({tset.n_v} vertices) to {cfg.out}")
    return 0


def cmd_train(args, cfg: Config) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    tset = mesh_io.load_sequence(args.inputs)
    tset = mesh_io.normalize_unit_box(tset)
    t_load = time.perf_counter()
    model, report = hierarchy.hierarchical_fit(
        tset, cfg.m_init, seed=cfg.seed,
        refine_threshold=cfg.refine_threshold,
        max_iter=cfg.max_iter, tol=cfg.tol)
    t_fit = time.perf_counter()
    data = mesh_io.assemble_data(tset)
    latent = hierarchy.latent_shape(data, model)
    artifact = _artifact_from_fit(tset, model, latent)
    model_io.save_model(artifact, os.path.join(cfg.out, "model.pmfa"))
    mesh_io.write_labeled_mesh(
        mesh_io.Mesh(latent.positions, tset.triangles), model.labels,
        os.path.join(cfg.out, "reference_labeled.obj"))
    with open(os.path.join(cfg.out, "refinement_report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(cfg.out, "log_likelihood.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_likelihood"])
        for it, ll in enumerate(model.log_likelihood_trace):
            writer.writerow([it, f"{ll:.12g}"])
    write_manifest(cfg.out, "train", cfg, {
        "load": t_load - t0, "fit": t_fit - t_load,
        "total": time.perf_counter() - t0})
    print(f"trained {report.initial_m} -> {report.final_n} parts; "
          f"artifacts in {cfg.out}")
    return 0


def cmd_segment(args, cfg: Config) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    artifact = model_io.load_model(args.model)
    i = args.shape
    if not 0 <= i < artifact.vertices.shape[0]:
        raise IndexOutOfRange(f"shape index {i} outside range")
    mesh = mesh_io.Mesh(artifact.scale_record.invert(artifact.vertices[i]),
                        artifact.triangles)
    mesh_io.write_labeled_mesh(mesh, artifact.model.labels,
                               os.path.join(cfg.out, f"segmented_{i:03d}.obj"))
    write_manifest(cfg.out, "segment", cfg, {"total": time.perf_counter() - t0})
    print(f"wrote segmented shape {i} with {artifact.model.m} parts to {cfg.out}")
    return 0


def cmd_reconstruct(args, cfg: Config) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    artifact = model_io.load_model(args.model)
    n_s = artifact.vertices.shape[0]
    indices = _parse_shape_list(args.shapes, n_s) if args.shapes else range(n_s)
    for i in indices:
        mesh = hierarchy.reconstruct(artifact.model, artifact.latent, i,
                                     artifact.triangles)
        mesh = mesh_io.Mesh(artifact.scale_record.invert(mesh.vertices),
                            mesh.triangles)
        mesh_io.write_obj(mesh, os.path.join(cfg.out, f"reconstructed_{i:03d}.obj"))
    write_manifest(cfg.out, "reconstruct", cfg, {"total": time.perf_counter() - t0})
    print(f"wrote {len(list(indices))} reconstructions to {cfg.out}")
    return 0


def _parse_shape_list(text: str, n_s: int) -> list:
    try:
        indices = [int(x) - 1 for x in text.split(",")]
    except ValueError as exc:
        raise InputError(f"bad shape list {text!r}") from exc
    for i in indices:
        if not 0 <= i < n_s:
            raise IndexOutOfRange(f"shape index {i + 1} outside [1, {n_s}]")
    return indices


def cmd_interpolate(args, cfg: Config) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    artifact = model_io.load_model(args.model)
    n_s = artifact.vertices.shape[0]
    pair = _parse_shape_list(args.shapes, n_s)
    if len(pair) != 2:
        raise InputError("--shapes takes exactly two comma-separated indices")
    i, j = pair
    ts = args.t or []
    data = artifact.data()
    graph = interpolation.build_part_graph(
        artifact.vertices, artifact.triangles, artifact.model.labels,
        artifact.model, joint_point_mode=cfg.joint_point_mode)
    residuals = hierarchy.reconstruction_residuals(
        artifact.model, artifact.latent, data)
    metrics = []
    for t in ts:
        blend, mesh = interpolation.interpolate_pose(
            artifact.model, graph, artifact.latent, residuals,
            artifact.triangles, i, j, t, scale_record=artifact.scale_record)
        mesh_io.write_obj(mesh, os.path.join(cfg.out, f"interp_t{t:.3f}.obj"))
        metrics.append({
            "t": t,
            "joint_residuals": {f"{p}-{c}": v for (p, c), v
                                in blend.joint_residuals.items()},
            "part_angles_rad": {str(k): v for k, v in blend.part_angles.items()},
            "roots": blend.roots,
        })
    with open(os.path.join(cfg.out, "interpolation_metrics.json"), "w") as fh:
        json.dump({"source": i + 1, "target": j + 1, "frames": metrics}, fh, indent=2)
        fh.write("\n")
    write_manifest(cfg.out, "interpolate", cfg, {"total": time.perf_counter() - t0})
    print(f"wrote {len(ts)} interpolated meshes to {cfg.out}")
    return 0


def cmd_report(args, cfg: Config) -> int:
    artifact = model_io.load_model(args.model)
    model = artifact.model
    data = artifact.data()
    ll = mfa.log_likelihood(data, model.components)
    print(f"model: {args.model}")
    print(f"parts: {model.m}  shapes: {model.n_s}  vertices: {len(model.labels)}")
    print(f"log-likelihood: {ll:.6f}")
    for k, fa in enumerate(model.components):
        count = int(np.sum(model.labels == k))
        print(f"  part {k}: {count} vertices, weight {fa.weight:.4f}, "
              f"scale {np.array2string(fa.scale, precision=4)}, "
              f"mean noise {fa.noise.mean():.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posemfa",
        description="Learn articulated pose variation from corresponded meshes")
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="RNG seed")
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="emit a synthetic articulated chain")
    p.add_argument("--noise", type=float, default=1e-3)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the hierarchical mixture model")
    p.add_argument("inputs", nargs="+", help="OBJ mesh sequence")
    p.add_argument("--m-init", type=int, dest="m_init")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="write a labeled training shape")
    p.add_argument("model")
    p.add_argument("--shape", type=int, default=0)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("reconstruct", help="write rigid reconstructions")
    p.add_argument("model")
    p.add_argument("--shapes", help="1-based comma-separated shape indices")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("interpolate", help="interpolate between two poses")
    p.add_argument("model")
    p.add_argument("--shapes", required=True, help="1-based pair i,j")
    p.add_argument("--t", type=float, action="append",
                   help="interpolation parameter, repeatable")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("report", help="summarize a model artifact")
    p.add_argument("model")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "m_init": getattr(args, "m_init", None),
    }
    try:
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
