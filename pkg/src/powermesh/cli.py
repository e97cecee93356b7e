"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Stats CSV output is
byte-reproducible by default; pass --timing to record real wall-clock
milliseconds instead.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .fields import (
    DEFAULT_DOMAIN,
    GridField,
    ProjectionConfig,
    analytic_field,
    read_sdfg,
    write_sdfg,
)
from .mesh import read_obj, write_obj, write_ply
from .metrics import (
    DEFAULT_F1_TAU,
    MetricsReport,
    compare_sets,
    marching_cubes,
    sample_mesh,
)
from .refinement import RefineConfig, SurfaceNotDetectedError, run


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_field(spec: str):
    """Return (field, domain).  Grid fields shrink the domain by one cell so
    central-difference gradients never leave the data."""
    if spec.startswith("grid:"):
        grid = read_sdfg(spec[len("grid:"):])
        return grid, grid.query_box()
    return analytic_field(spec), DEFAULT_DOMAIN


def _build_parser() -> _Parser:
    parser = _Parser(prog="powermesh",
                     description="Adaptive isosurface extraction from SDFs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ext = sub.add_parser("extract", help="adaptive surface extraction")
    p_ext.add_argument("--field", required=True,
                       help="analytic spec (e.g. sphere:0.5, torus:0.5,0.2, "
                            "union(a;b)) or grid:FILE.sdfg")
    p_ext.add_argument("--init", type=int, default=8,
                       help="initial per-axis grid resolution")
    p_ext.add_argument("--max-points", type=int, default=5000,
                       help="refinement insertion budget")
    p_ext.add_argument("--eps", type=float, default=0.0,
                       help="deviation termination threshold")
    p_ext.add_argument("--proj-iters", type=int, default=20)
    p_ext.add_argument("--proj-tol", type=float, default=None)
    p_ext.add_argument("--out", required=True, help="output OBJ path")
    p_ext.add_argument("--ply", default=None, help="optional PLY output path")
    p_ext.add_argument("--stats", default=None, help="per-step stats CSV path")
    p_ext.add_argument("--timing", action="store_true",
                       help="record real wall times in the stats CSV")
    p_ext.add_argument("--seed", type=int, default=0)

    p_base = sub.add_parser("baseline", help="uniform marching-cubes baseline")
    p_base.add_argument("--field", required=True)
    p_base.add_argument("--res", type=int, required=True)
    p_base.add_argument("--out", required=True)
    p_base.add_argument("--ply", default=None)

    p_met = sub.add_parser("metrics", help="compare two meshes")
    p_met.add_argument("--a", required=True, help="first OBJ mesh")
    p_met.add_argument("--b", required=True, help="second OBJ mesh")
    p_met.add_argument("--samples", type=int, default=100_000,
                       help="sample count per mesh (up to 1,000,000)")
    p_met.add_argument("--tau", type=float, default=DEFAULT_F1_TAU)
    p_met.add_argument("--seed", type=int, default=0)
    p_met.add_argument("--csv", default=None, help="append one CSV row here")

    p_gen = sub.add_parser("gen-grid", help="sample a field into an SDFG grid")
    p_gen.add_argument("--field", required=True)
    p_gen.add_argument("--res", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    return parser


def cmd_extract(args) -> int:
    field, domain = _load_field(args.field)
    proj_kwargs = {"max_iters": args.proj_iters}
    if args.proj_tol is not None:
        proj_kwargs["tol"] = args.proj_tol
    proj = ProjectionConfig(**proj_kwargs)
    cfg = RefineConfig(init_resolution=args.init, k_max=args.max_points,
                       eps=args.eps, projection=proj)
    mesh, stats = run(field, cfg, domain)
    tri_mesh = mesh.to_triangle_mesh()
    write_obj(args.out, tri_mesh)
    if args.ply:
        write_ply(args.ply, tri_mesh)
    if args.stats:
        with open(args.stats, "w", encoding="ascii") as f:
            f.write("\n".join(stats.csv_lines(timing=args.timing)) + "\n")
    print(f"sites {stats.site_count} (init {stats.init_sites}, "
          f"inserted {stats.inserted_sites}, hidden {stats.hidden_sites})")
    print(f"patches {stats.patch_count} "
          f"(triangles {len(tri_mesh.faces)}, vertices {len(tri_mesh.vertices)})")
    print(f"stop {stats.stop_reason} delta {stats.stop_delta}")
    print(f"queries {stats.total_queries}")
    print(f"wall_s {stats.wall_s:.3f}")
    return 0


def cmd_baseline(args) -> int:
    field, domain = _load_field(args.field)
    t0 = time.perf_counter()
    mesh = marching_cubes(field, args.res, domain)
    wall = time.perf_counter() - t0
    write_obj(args.out, mesh)
    if args.ply:
        write_ply(args.ply, mesh)
    print(f"resolution {args.res} queries {field.query_count}")
    print(f"triangles {len(mesh.faces)} vertices {len(mesh.vertices)}")
    print(f"wall_s {wall:.3f}")
    return 0


def cmd_metrics(args) -> int:
    n = args.samples
    if not (1 <= n <= 1_000_000):
        raise UsageError("--samples must be between 1 and 1,000,000")
    mesh_a = read_obj(args.a)
    mesh_b = read_obj(args.b)
    t0 = time.perf_counter()
    sa = sample_mesh(mesh_a, n, args.seed)
    sb = sample_mesh(mesh_b, n, args.seed)
    report = compare_sets(sa, sb, args.tau)
    report.runtime_s = time.perf_counter() - t0
    sys.stdout.write(report.format_block())
    if args.csv:
        with open(args.csv, "a", encoding="ascii") as f:
            f.write(MetricsReport.CSV_HEADER + "\n")
            f.write(report.csv_row() + "\n")
    return 0


def cmd_gen_grid(args) -> int:
    field = analytic_field(args.field)
    res = args.res
    if res < 2:
        raise UsageError("--res must be >= 2")
    lo, hi = DEFAULT_DOMAIN
    # quantize geometry to the file format's f32 before sampling so a reload
    # reproduces the sampled positions bit-for-bit
    spacing = float(np.float32((hi[0] - lo[0]) / (res - 1)))
    lo = tuple(float(np.float32(v)) for v in lo)
    values = np.empty(res * res * res, dtype=np.float64)
    edge = {0, 1, res - 2, res - 1}  # nodes within one cell of the boundary
    i = 0
    for iz in range(res):
        for iy in range(res):
            for ix in range(res):
                p = (lo[0] + spacing * ix, lo[1] + spacing * iy,
                     lo[2] + spacing * iz)
                v = field.eval(p).value
                if v <= 0.0 and (ix in edge or iy in edge or iz in edge):
                    raise RuntimeError(
                        f"field zero set reaches the domain boundary (value "
                        f"{v} at {p}); boundary sites must stay exterior, "
                        f"refusing to write a grid")
                values[i] = v
                i += 1
    grid = GridField((res, res, res), lo, spacing,
                     values.astype(np.float32))
    write_sdfg(args.out, grid)
    print(f"wrote {args.out}: {res}^3 grid, spacing {spacing!r}")
    return 0


_COMMANDS = {
    "extract": cmd_extract,
    "baseline": cmd_baseline,
    "metrics": cmd_metrics,
    "gen-grid": cmd_gen_grid,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, SurfaceNotDetectedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
