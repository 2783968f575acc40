"""Batch command-line front-end.

Every subcommand takes a seed and writes JSON (always), CSV ladders and
SVG plots (per --format) into the output directory; identical invocations
produce byte-identical JSON.  Exit codes: 0 success, 2 for runs that
completed but flagged their analysis (non-converged solve, inadmissible
density, failed suite check), 1 for usage or input errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, maps, metric, modulus
from .algebra import builtin_algebra, load_algebra
from .errors import AdmissibilityError, StructureError
from .frames import builtin_frame, growth_vector_at, load_frame
from .plotting import emit_heatmap, emit_plot
from .suite import SCALES, run_suite
from .util import json_dumps, write_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

OUT_ENV = "CARNOTLAB_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _parse_point(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _resolve_frame(spec: str):
    try:
        return builtin_frame(spec)
    except KeyError:
        if Path(spec).exists():
            return load_frame(spec)
        raise StructureError(f"unknown frame {spec!r} (not a builtin, not a file)")


def _resolve_algebra(spec: str):
    try:
        return builtin_algebra(spec)
    except KeyError:
        if Path(spec).exists():
            return load_algebra(spec)
        raise StructureError(f"unknown algebra {spec!r} (not a builtin, not a file)")


def _resolve_map(spec: str, frame_spec: str | None = None):
    frame = _resolve_frame(frame_spec) if frame_spec else None
    try:
        return maps.builtin(spec, frame=frame)
    except (KeyError, ValueError):
        if Path(spec).exists():
            return maps.load_map(spec)
        raise StructureError(f"unknown map {spec!r} (not a builtin, not a file)")


def _writer(args):
    out_dir = Path(args.out)
    kinds = {"json", "csv", "svg"} if args.format == "all" else {args.format, "json"}

    def write(stem, payload, csv_parts=None, svg_parts=None):
        out_dir.mkdir(parents=True, exist_ok=True)
        wrapped = {
            "artifact": {"name": "carnotlab", "version": __version__},
            "config": {
                k: v for k, v in sorted(vars(args).items()) if k != "handler"
            },
            "result": payload,
        }
        (out_dir / f"{stem}.json").write_text(json_dumps(wrapped), encoding="utf-8")
        if "csv" in kinds and csv_parts:
            for name, header, rows in csv_parts:
                write_csv(out_dir / f"{stem}.{name}.csv", header, rows)
        if "svg" in kinds and svg_parts:
            for name, svg in svg_parts:
                if svg is not None:
                    (out_dir / f"{stem}.{name}.svg").write_text(svg, encoding="utf-8")
        return out_dir / f"{stem}.json"

    return write


# -- subcommand handlers ------------------------------------------------------

def _cmd_algebra_verify(args, write):
    algebra = _resolve_algebra(args.algebra)
    report = algebra.verify_structure()
    payload = {
        "algebra": algebra.name,
        "layers": list(algebra.layers),
        "Q": algebra.homogeneous_dimension(),
        "valid": report.ok,
        "violations": [
            {"axiom": v.axiom, "indices": list(v.indices), "magnitude": v.magnitude}
            for v in report.violations
        ],
    }
    write("algebra-verify", payload)
    return EXIT_OK if report.ok else EXIT_FLAGGED


def _cmd_growth(args, write):
    frame = _resolve_frame(args.frame)
    data = growth_vector_at(frame, _parse_point(args.point))
    write("growth", data.to_dict())
    return EXIT_OK


def _cmd_dist(args, write):
    frame = _resolve_frame(args.frame)
    opts = metric.DistanceOptions(
        segments=args.segments, restarts=args.restarts, seed=args.seed
    )
    result = metric.cc_distance(frame, _parse_point(args.point), _parse_point(args.target), opts)
    csv_parts = [
        (
            "controls",
            [f"u{j+1}" for j in range(frame.r)],
            [list(row) for row in result.controls],
        )
    ]
    write("dist", result.to_dict(), csv_parts=csv_parts)
    return EXIT_OK if result.converged else EXIT_FLAGGED


def _cmd_ball_box(args, write):
    frame = _resolve_frame(args.frame)
    report = metric.ball_box_report(
        frame,
        _parse_point(args.point),
        r0=args.r0,
        ladder=args.ladder,
        n_samples=args.samples,
        seed=args.seed,
        workers=args.workers,
    )
    csv_parts = [
        (
            "ladder",
            ["radius", "volume", "std_error"],
            list(zip(report.radii, report.volumes, report.std_errors)),
        )
    ]
    svg = emit_plot(
        report.radii,
        report.volumes,
        title=f"ball volumes on {frame.name}",
        xlabel="radius",
        ylabel="volume",
    )
    write("ball-box", report.to_dict(), csv_parts=csv_parts, svg_parts=[("ladder", svg)])
    return EXIT_OK


def _family_from_args(args):
    if args.family:
        return modulus.family_from_csv(args.family)
    if args.rectangle:
        w, h, n = args.rectangle.split(",")
        return modulus.rectangle_family(float(w), float(h), int(n))
    if args.radial:
        rin, rout, angles, heights = args.radial.split(",")
        return modulus.radial_family(
            float(rin), float(rout), int(angles),
            heights=np.linspace(-0.3, 0.3, int(heights)),
        )
    raise StructureError("one of --family / --rectangle / --radial is required")


def _grid_shape(text):
    parts = [int(v) for v in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def _cmd_modulus(args, write):
    family = _family_from_args(args)
    result = modulus.modulus_p(family, _grid_shape(args.grid), p=args.p)
    svg = emit_heatmap(result.rho.values, result.rho.shape, title=f"optimal density, p={args.p:g}")
    write("modulus", result.to_dict(), svg_parts=[("density", svg)])
    return EXIT_OK


def _cmd_dilatation(args, write):
    desc = _resolve_map(args.map)
    prof = analysis.dilatation_profile(
        desc,
        _parse_point(args.point),
        r0=args.r0,
        ladder=args.ladder,
        sphere_m=args.samples,
        seed=args.seed,
    )
    csv_parts = [
        (
            "ladder",
            ["radius", "L", "L_prime", "l", "H", "H_prime"],
            list(zip(prof.radii, prof.L, prof.L_prime, prof.l, prof.H, prof.H_prime)),
        )
    ]
    svg = emit_plot(
        prof.radii, prof.H, title=f"H along the ladder ({desc.name})",
        xlabel="radius", ylabel="H", loglog=False, annotate_slope=False,
    )
    write("dilatation", prof.to_dict(), csv_parts=csv_parts, svg_parts=[("ladder", svg)])
    return EXIT_OK


def _cmd_pansu(args, write):
    desc = _resolve_map(args.map)
    ladder = tuple(args.eps0 * 2.0**-i for i in range(args.ladder))
    fit = analysis.pansu_differential(
        desc, _parse_point(args.point), eps_ladder=ladder, m=args.samples
    )
    csv_parts = [("residuals", ["eps", "residual"], list(zip(fit.eps_ladder, fit.residuals)))]
    svg = emit_plot(
        fit.eps_ladder, fit.residuals, title=f"blow-up residuals ({desc.name})",
        xlabel="eps", ylabel="residual",
    )
    write("pansu", fit.to_dict(), csv_parts=csv_parts, svg_parts=[("residuals", svg)])
    return EXIT_OK if fit.differentiable else EXIT_FLAGGED


def _cmd_jacobian(args, write):
    desc = _resolve_map(args.map)
    radii = tuple(args.r0 * 2.0**-i for i in range(args.ladder))
    est = analysis.jacobian_volume_ratio(
        desc, _parse_point(args.point), radii=radii, n_samples=args.samples, seed=args.seed
    )
    csv_parts = [("ladder", ["radius", "ratio", "std_error"],
                  list(zip(est.radii, est.ratios, est.std_errors)))]
    write("jacobian", est.to_dict(), csv_parts=csv_parts)
    return EXIT_OK if est.reliable else EXIT_FLAGGED


def _cmd_area_check(args, write):
    desc = _resolve_map(args.map)
    n = desc.domain.n
    half = np.full(n, args.halfwidth)
    if n == 3:
        half[2] = args.t_halfwidth
    region = (-half, half)
    u = None
    if args.annulus:
        rin, rout = (float(v) for v in args.annulus.split(","))

        def u(ys, rin=rin, rout=rout):
            ys = np.atleast_2d(ys)
            rho = np.hypot(ys[:, 0], ys[:, 1])
            inside = (rho >= rin) & (rho <= rout)
            if ys.shape[1] == 3:
                inside = inside & (np.abs(ys[:, 2]) <= args.t_halfwidth - 0.05)
            return inside.astype(float)

    chk = analysis.area_formula_check(desc, region, u=u, n_samples=args.samples, seed=args.seed)
    write("area-check", chk.to_dict())
    return EXIT_OK


def _cmd_ko_check(args, write):
    desc = _resolve_map(args.map, args.map_frame)
    family = _family_from_args(args)
    try:
        report = modulus.ko_check(desc, family, Q=args.Q, grid_shape=_grid_shape(args.grid))
    except AdmissibilityError as exc:
        write("ko-check", {"error": str(exc), "violations": exc.violating_curves})
        return EXIT_FLAGGED
    write("ko-check", report.to_dict())
    return EXIT_OK


def _cmd_branch_scan(args, write):
    desc = _resolve_map(args.map)
    n = desc.domain.n
    half = np.full(n, args.halfwidth)
    scan = analysis.local_injectivity_scan(
        desc, (-half, half), grid_n=args.grid, ball_radius=args.ball_radius, seed=args.seed
    )
    csv_parts = [
        (
            "flagged",
            [f"x{k+1}" for k in range(n)] + ["reason"],
            [list(row) + [reason] for row, reason in zip(scan.flagged, scan.reasons)],
        )
    ]
    write("branch-scan", scan.to_dict(), csv_parts=csv_parts)
    return EXIT_OK


def _cmd_suite(args, write):
    names = set(args.only.split(",")) if args.only else None
    if names:
        names = {n if n.startswith("check_") else f"check_{n.replace('-', '_')}" for n in names}
    report, timings = run_suite(seed=args.seed, scale=args.scale, names=names)
    write("suite", report)
    width = max(len(c["name"]) for c in report["checks"]) if report["checks"] else 8
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{check['name']:<{width}}  {status}  ({timings[check['name']]:.1f}s)")
    print(f"suite: {'PASS' if report['passed'] else 'FAIL'} ({report['scale']} scale)")
    return EXIT_OK if report["passed"] else EXIT_FLAGGED


def _cmd_catalog(args, write):
    payload = {
        "frames": ["heisenberg1", "engel", "abelian(n)"],
        "maps": [
            {"name": "identity", "branch_set": "empty"},
            {"name": "translation(g1,g2,g3)", "branch_set": "empty"},
            {"name": "dilation(lam)", "branch_set": "empty"},
            {"name": "automorphism(a,b,c,d)", "branch_set": "empty"},
            {"name": "winding", "branch_set": "t-axis", "multiplicity": 2},
        ],
        "map_file_kinds": ["polynomial", "radial"],
    }
    write("catalog", payload)
    for frame in payload["frames"]:
        print(f"frame  {frame}")
    for entry in payload["maps"]:
        print(f"map    {entry['name']}  (branch set: {entry['branch_set']})")
    return EXIT_OK


# -- parser wiring --------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="carnotlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"carnotlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=os.environ.get(OUT_ENV, "carnotlab-out"))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("json", "csv", "svg", "all"), default="all")

    p = sub.add_parser("algebra-verify", help="validate a stratified algebra definition")
    p.add_argument("--algebra", required=True)
    common(p)
    p.set_defaults(handler=_cmd_algebra_verify)

    p = sub.add_parser("growth", help="growth vector and weights at a point")
    p.add_argument("--frame", required=True)
    p.add_argument("--point", required=True)
    common(p)
    p.set_defaults(handler=_cmd_growth)

    p = sub.add_parser("dist", help="CC distance between two chart points")
    p.add_argument("--frame", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--segments", type=int, default=64)
    p.add_argument("--restarts", type=int, default=8)
    common(p)
    p.set_defaults(handler=_cmd_dist)

    p = sub.add_parser("ball-box", help="Monte Carlo ball volumes and slope fit")
    p.add_argument("--frame", required=True)
    p.add_argument("--point", default="0,0,0")
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--ladder", type=int, default=5)
    p.add_argument("--samples", type=int, default=100_000)
    common(p)
    p.set_defaults(handler=_cmd_ball_box)

    p = sub.add_parser("modulus", help="p-modulus of a curve family on a grid")
    p.add_argument("--family", help="curve family CSV")
    p.add_argument("--rectangle", help="w,h,n builtin rectangle family")
    p.add_argument("--radial", help="rin,rout,angles,heights builtin radial family")
    p.add_argument("--grid", default="24,24")
    p.add_argument("--p", type=float, default=2.0)
    common(p)
    p.set_defaults(handler=_cmd_modulus)

    p = sub.add_parser("dilatation", help="dilatation profile of a map at a point")
    p.add_argument("--map", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--r0", type=float, default=0.25)
    p.add_argument("--ladder", type=int, default=6)
    p.add_argument("--samples", type=int, default=64)
    common(p)
    p.set_defaults(handler=_cmd_dilatation)

    p = sub.add_parser("pansu", help="blow-up differential fit at a point")
    p.add_argument("--map", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--eps0", type=float, default=0.25)
    p.add_argument("--ladder", type=int, default=4)
    p.add_argument("--samples", type=int, default=32)
    common(p)
    p.set_defaults(handler=_cmd_pansu)

    p = sub.add_parser("jacobian", help="volume-ratio Jacobian along a radius ladder")
    p.add_argument("--map", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--r0", type=float, default=0.2)
    p.add_argument("--ladder", type=int, default=3)
    p.add_argument("--samples", type=int, default=20_000)
    common(p)
    p.set_defaults(handler=_cmd_jacobian)

    p = sub.add_parser("area-check", help="area formula check on a box region")
    p.add_argument("--map", required=True)
    p.add_argument("--halfwidth", type=float, default=1.0)
    p.add_argument("--t-halfwidth", type=float, default=0.4)
    p.add_argument("--annulus", help="rin,rout target indicator")
    p.add_argument("--samples", type=int, default=4000)
    common(p)
    p.set_defaults(handler=_cmd_area_check)

    p = sub.add_parser("ko-check", help="outer-distortion inequality check")
    p.add_argument("--map", required=True)
    p.add_argument("--map-frame", help="frame for builtin maps (e.g. abelian(2))")
    p.add_argument("--family", help="curve family CSV")
    p.add_argument("--rectangle", help="w,h,n builtin rectangle family")
    p.add_argument("--radial", help="rin,rout,angles,heights builtin radial family")
    p.add_argument("--grid", default="20,20")
    p.add_argument("--Q", type=float, default=2.0)
    common(p)
    p.set_defaults(handler=_cmd_ko_check)

    p = sub.add_parser("branch-scan", help="local-injectivity scan on a grid")
    p.add_argument("--map", required=True)
    p.add_argument("--grid", type=int, default=17)
    p.add_argument("--halfwidth", type=float, default=1.0)
    p.add_argument("--ball-radius", type=float, default=0.3)
    common(p)
    p.set_defaults(handler=_cmd_branch_scan)

    p = sub.add_parser("suite", help="run the verification battery")
    p.add_argument("--scale", choices=tuple(SCALES), default="quick")
    p.add_argument("--only", help="comma-separated check names to run")
    common(p)
    p.set_defaults(handler=_cmd_suite)

    p = sub.add_parser("catalog", help="list built-in frames and maps")
    common(p)
    p.set_defaults(handler=_cmd_catalog)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors exit 1, --help exits 0
        return int(exc.code or 0)
    write = _writer(args)
    try:
        return args.handler(args, write)
    except (StructureError, FileNotFoundError, ValueError) as exc:
        print(f"carnotlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
