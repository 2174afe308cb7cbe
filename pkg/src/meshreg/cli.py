"""Command-line front end.

Subcommands: ``mesh`` (adaptive meshing + quality report), ``register``
(mesh-based registration emitting field/warped/difference/report),
``warp`` (apply a saved field), ``bench`` (mesh vs. pixel engine comparison
over a slice directory), ``metrics`` (MSD between two images).

Exit codes: 0 ok, 2 invalid configuration, 3 I/O failure, 4 solver
divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .baseline import register_pixelwise
from .densefield import (
    MeshCoverageError,
    densify,
    difference_image,
    load_field,
    save_field,
    save_node_displacements_csv,
    warp_image,
)
from .image import FileFormatError, load_image, msd, save_image
from .meshgen import (
    MeshGenConfig,
    NodeBudget,
    generate_mesh,
    load_mesh,
    load_mesh_json,
    quality_stats,
    save_mesh,
    save_mesh_json,
)
from .solver import DivergenceError, SolverConfig, register

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

DEFAULTS = {
    "tau": 0.005,
    "lambda": 0.8,
    "iters": 100,
    "nodes": 1000,
    "seed": 0,
}


class ConfigError(ValueError):
    pass


def _build_parser():
    parser = argparse.ArgumentParser(prog="meshreg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"meshreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *names):
        if "ref" in names:
            p.add_argument("--ref", help="reference image (PGM or PNG)")
        if "template" in names:
            p.add_argument("--template", help="template image (PGM or PNG)")
        if "mesh" in names:
            p.add_argument("--mesh", help="mesh file (.json or .node/.ele stem)")
        if "solver" in names:
            p.add_argument("--tau", type=float, help="descent step size")
            p.add_argument("--lambda", dest="lam", type=float, help="smoothing weight in (0,1)")
            p.add_argument("--iters", type=int, help="iteration count")
        if "nodes" in names:
            p.add_argument("--nodes", type=int, help="mesh node budget")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--config", help="key=value config file; flags override it")

    p = sub.add_parser("mesh", help="generate a content-adaptive mesh")
    common(p, "template", "nodes")
    p = sub.add_parser("register", help="register a template onto a reference")
    common(p, "ref", "template", "mesh", "solver", "nodes")
    p = sub.add_parser("warp", help="warp an image with a saved dense field")
    common(p, "template")
    p.add_argument("--field", help="dense displacement field (.bin)")
    p = sub.add_parser("bench", help="compare mesh and pixel engines on a slice directory")
    common(p, "solver", "nodes")
    p.add_argument("--dir", help="directory of >= 2 equally sized images")
    p = sub.add_parser("metrics", help="MSD between two images")
    common(p, "ref", "template")
    return parser


def _parse_config_file(path):
    """Flat key=value file; '#' starts a comment, values parse as
    int/float/bool when possible."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        raw = raw.strip("\"'")
        if raw.lower() in ("true", "false"):
            val = raw.lower() == "true"
        else:
            try:
                val = int(raw)
            except ValueError:
                try:
                    val = float(raw)
                except ValueError:
                    val = raw
        values[key] = val
    return values


def _resolve(args, keys):
    """Merge defaults < config file < explicit flags for the given keys."""
    merged = {}
    file_vals = _parse_config_file(args.config) if args.config else {}
    alias = {"lam": "lambda"}
    for key in keys:
        file_key = alias.get(key, key)
        if getattr(args, key, None) is not None:
            merged[key] = getattr(args, key)
        elif file_key in file_vals:
            merged[key] = file_vals[file_key]
        elif key in ("lam",):
            merged[key] = DEFAULTS["lambda"]
        elif key in DEFAULTS:
            merged[key] = DEFAULTS[key]
        else:
            merged[key] = None
    return merged


def _require_readable(path, what):
    if path is None:
        raise ConfigError(f"missing required input: {what}")
    if not os.path.isfile(path):
        raise OSError(f"{what} not readable: {path!r}")


def _validate_solver(params):
    tau, lam, iters = params["tau"], params["lam"], params["iters"]
    if not (isinstance(tau, (int, float)) and tau > 0):
        raise ConfigError(f"tau must be > 0, got {tau}")
    if not (isinstance(lam, (int, float)) and 0 < lam < 1):
        raise ConfigError(f"lambda must be in (0, 1), got {lam}")
    if not (isinstance(iters, int) and iters >= 1):
        raise ConfigError(f"iters must be a positive integer, got {iters}")


def _validate_nodes(nodes):
    if not (isinstance(nodes, int) and nodes >= 4):
        raise ConfigError(f"nodes must be an integer >= 4, got {nodes}")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(outdir, command, params, inputs, outputs, seed):
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "inputs": {p: {"sha256": _sha256(p), "bytes": os.path.getsize(p)} for p in inputs},
        "outputs": sorted(outputs),
        "versions": {
            "meshreg": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _load_mesh_arg(path):
    if path.endswith(".json"):
        return load_mesh_json(path)
    stem = path[:-5] if path.endswith(".node") else path
    return load_mesh(stem)


def _outpath(outdir, name):
    os.makedirs(outdir, exist_ok=True)
    return os.path.join(outdir, name)


def cmd_mesh(args):
    params = _resolve(args, ["nodes", "seed"])
    _validate_nodes(params["nodes"])
    _require_readable(args.template, "--template image")
    img = load_image(args.template)

    mesh = generate_mesh(
        img,
        NodeBudget(target_nodes=params["nodes"]),
        MeshGenConfig(seed=params["seed"]),
    )
    stats = quality_stats(mesh)
    outdir = args.out
    stem = _outpath(outdir, "mesh")
    save_mesh(mesh, stem)
    save_mesh_json(mesh, _outpath(outdir, "mesh.json"))
    with open(_outpath(outdir, "quality.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    outputs = ["mesh.node", "mesh.ele", "mesh.json", "quality.json"]
    _write_manifest(outdir, "mesh", params, [args.template], outputs, params["seed"])
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_register(args):
    params = _resolve(args, ["tau", "lam", "iters", "nodes", "seed"])
    _validate_solver(params)
    _validate_nodes(params["nodes"])
    _require_readable(args.ref, "--ref image")
    _require_readable(args.template, "--template image")
    inputs = [args.ref, args.template]
    ref = load_image(args.ref)
    tmpl = load_image(args.template)
    if ref.shape != tmpl.shape:
        raise ConfigError(f"image sizes differ: {ref.shape} vs {tmpl.shape}")

    if args.mesh:
        mesh_input = args.mesh if args.mesh.endswith(".json") else args.mesh + ".node"
        _require_readable(mesh_input, "--mesh file")
        inputs.append(mesh_input)
        mesh = _load_mesh_arg(args.mesh)
    else:
        mesh = generate_mesh(
            tmpl,
            NodeBudget(target_nodes=params["nodes"]),
            MeshGenConfig(seed=params["seed"]),
        )

    cfg = SolverConfig(tau=params["tau"], lam=params["lam"], max_iterations=params["iters"])
    u, report = register(ref, tmpl, mesh, cfg)

    outdir = args.out
    dense = densify(mesh, u, tmpl.width, tmpl.height)
    warped = warp_image(tmpl, dense)
    save_field(dense, _outpath(outdir, "field.bin"))
    save_image(warped, _outpath(outdir, "warped.png"))
    save_image(difference_image(warped, ref), _outpath(outdir, "difference.png"))
    save_mesh_json(mesh, _outpath(outdir, "mesh.json"))
    save_node_displacements_csv(mesh, u, _outpath(outdir, "nodes.csv"))
    with open(_outpath(outdir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    outputs = ["field.bin", "warped.png", "difference.png", "mesh.json", "nodes.csv", "report.json"]
    _write_manifest(outdir, "register", params, inputs, outputs, params["seed"])
    print(
        json.dumps(
            {
                "msd_before": report.msd_before,
                "msd_after": report.msd_after,
                "iterations_run": report.iterations_run,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_warp(args):
    _require_readable(args.template, "--template image")
    _require_readable(args.field, "--field file")
    tmpl = load_image(args.template)
    field = load_field(args.field)
    if (field.height, field.width) != tmpl.shape:
        raise ConfigError(f"field {field.shape} does not match image {tmpl.shape}")
    outdir = args.out
    warped = warp_image(tmpl, field)
    save_image(warped, _outpath(outdir, "warped.png"))
    _write_manifest(outdir, "warp", {}, [args.template, args.field], ["warped.png"],
                    _resolve(args, ["seed"])["seed"])
    print(json.dumps({"warped": os.path.join(outdir, "warped.png")}))
    return EXIT_OK


def cmd_bench(args):
    params = _resolve(args, ["tau", "lam", "iters", "nodes", "seed"])
    _validate_solver(params)
    _validate_nodes(params["nodes"])
    if not args.dir or not os.path.isdir(args.dir):
        raise ConfigError(f"--dir must name a directory, got {args.dir!r}")
    names = sorted(
        f for f in os.listdir(args.dir) if f.lower().endswith((".pgm", ".png"))
    )
    if len(names) < 2:
        raise ConfigError(f"bench needs >= 2 images, found {len(names)} in {args.dir!r}")
    paths = [os.path.join(args.dir, f) for f in names]
    images = [load_image(p) for p in paths]
    if len({im.shape for im in images}) != 1:
        raise ConfigError("bench images must all have the same size")

    cfg = SolverConfig(tau=params["tau"], lam=params["lam"], max_iterations=params["iters"])
    pairs = []
    for k in range(len(images) - 1):
        tmpl, ref = images[k], images[k + 1]
        t0 = time.perf_counter()
        mesh = generate_mesh(
            tmpl,
            NodeBudget(target_nodes=params["nodes"]),
            MeshGenConfig(seed=params["seed"]),
        )
        t_mesh = time.perf_counter() - t0
        _, mesh_report = register(ref, tmpl, mesh, cfg)
        _, pixel_report = register_pixelwise(
            ref, tmpl, tau=params["tau"], lam=params["lam"], iterations=params["iters"]
        )
        pairs.append(
            {
                "template": names[k],
                "reference": names[k + 1],
                "mesh_nodes": mesh.n_vertices,
                "mesh_msd": mesh_report.msd_after,
                "mesh_solve_time": mesh_report.wall_time,
                "mesh_total_time": mesh_report.wall_time + t_mesh,
                "pixel_msd": pixel_report.msd_after,
                "pixel_time": pixel_report.wall_time,
                "msd_before": mesh_report.msd_before,
            }
        )

    summary = {
        "pairs": pairs,
        "mean_msd_mesh": float(np.mean([p["mesh_msd"] for p in pairs])),
        "mean_msd_pixel": float(np.mean([p["pixel_msd"] for p in pairs])),
        "total_time_mesh": float(sum(p["mesh_total_time"] for p in pairs)),
        "total_time_pixel": float(sum(p["pixel_time"] for p in pairs)),
        "iterations": params["iters"],
    }
    outdir = args.out
    with open(_outpath(outdir, "bench.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    table = _bench_table(summary)
    with open(_outpath(outdir, "bench.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    _write_manifest(outdir, "bench", params, paths, ["bench.json", "bench.txt"], params["seed"])
    print(table, end="")
    return EXIT_OK


def _bench_table(summary):
    header = f"{'pair':<24}{'msd before':>12}{'mesh msd':>12}{'pixel msd':>12}{'mesh s':>10}{'pixel s':>10}"
    lines = [header, "-" * len(header)]
    for p in summary["pairs"]:
        lines.append(
            f"{p['template'] + '->' + p['reference']:<24}"
            f"{p['msd_before']:>12.3f}{p['mesh_msd']:>12.3f}{p['pixel_msd']:>12.3f}"
            f"{p['mesh_total_time']:>10.2f}{p['pixel_time']:>10.2f}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'mean / total':<24}{'':>12}{summary['mean_msd_mesh']:>12.3f}"
        f"{summary['mean_msd_pixel']:>12.3f}{summary['total_time_mesh']:>10.2f}"
        f"{summary['total_time_pixel']:>10.2f}"
    )
    return "\n".join(lines) + "\n"


def cmd_metrics(args):
    _require_readable(args.ref, "--ref image")
    _require_readable(args.template, "--template image")
    a = load_image(args.ref)
    b = load_image(args.template)
    if a.shape != b.shape:
        raise ConfigError(f"image sizes differ: {a.shape} vs {b.shape}")
    out = {
        "width": a.width,
        "height": a.height,
        "msd": msd(a, b),
        "max_abs_diff": float(np.max(np.abs(a.data - b.data))),
    }
    outdir = args.out
    with open(_outpath(outdir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    _write_manifest(outdir, "metrics", {}, [args.ref, args.template], ["metrics.json"],
                    _resolve(args, ["seed"])["seed"])
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "mesh": cmd_mesh,
    "register": cmd_register,
    "warp": cmd_warp,
    "bench": cmd_bench,
    "metrics": cmd_metrics,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, MeshCoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
