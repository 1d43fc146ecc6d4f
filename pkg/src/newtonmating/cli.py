"""Command-line front end.

Subcommands render dynamical and parameter planes, trace rays, compute
itineraries and graphs, tabulate cusps and centers, transport parameters,
and run verification suites from a flat ``key = value`` config file.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, boettcher, mating, params, puzzle, render, suites
from .angles import Angle, is_triadic, itinerary_of_angle, theta
from .maps import MapFamily, SpherePoint, parse_complex

log = logging.getLogger("newtonmating")

EXIT_FAIL = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


def tolerances() -> dict:
    """Every numerical constant a run depends on, for the log and the report."""
    return {
        "landing_tol": boettcher.LANDING_TOL,
        "precritical_tol": boettcher.PRECRITICAL_TOL,
        "ray_max_depth": boettcher.MAX_DEPTH,
        "tau_graph": puzzle.TAU_GRAPH,
        "max_spacing": puzzle.MAX_SPACING,
        "depth_cap": puzzle.DEFAULT_DEPTH_CAP,
        "junction_tol": puzzle.JUNCTION_TOL,
        "critical_junction_tol": puzzle.CRITICAL_JUNCTION_TOL,
        "max_words": puzzle.MAX_WORDS,
        "membership_tol": mating.MEMBERSHIP_TOL,
        "param_cap": render.PARAM_CAP,
        "param_tol": render.PARAM_TOL,
    }


def versions() -> dict:
    import scipy

    return {"newtonmating": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _log_run(command: str) -> None:
    log.info("command %s", command)
    log.info("versions %s", json.dumps(versions(), sort_keys=True))
    log.info("tolerances %s", json.dumps(tolerances(), sort_keys=True))


# ------------------------------------------------------------------ config


def _coerce(key: str, raw: str):
    default = suites.DEFAULTS[key]
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None
    if key == "t":
        try:
            Angle.parse(raw)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"t: {raw!r} is not an angle p/q") from None
    return raw


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    cfg = dict(suites.DEFAULTS)
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in cfg:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    if cfg["suite"] not in suites.SUITES:
        raise ConfigError(f"suite must be one of {suites.SUITES}")
    if cfg["case"] not in ("center", "boundary"):
        raise ConfigError("case must be center or boundary")
    return cfg


# ----------------------------------------------------------------- helpers


def _family(name: str, param) -> MapFamily:
    if name == "dbas":
        return MapFamily.dbas()
    if param is None:
        raise SystemExit(f"--param is required for the {name} family")
    return MapFamily.cubic(param) if name == "cubic" else MapFamily.newton(param)


def _emit(args, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.json or not args.out:
        sys.stdout.write(text)


def _size(s: str) -> tuple:
    w, _, h = s.lower().partition("x")
    return int(w), int(h or w)


def _spec(args) -> render.RenderSpec:
    return render.RenderSpec(center=args.center, width=args.width, resolution=args.size,
                             coloring=getattr(args, "coloring", "basin"),
                             overlays=getattr(args, "overlay", None) or [],
                             angles=args.angle or [], max_iter=getattr(args, "max_iter", 200))


def _write_image(args, img, sidecar) -> None:
    out = Path(args.out)
    render.write_ppm(out, img)
    sidecar["image"] = out.name
    if args.png:
        png = out.with_suffix(".png")
        sidecar["png"] = png.name if render.write_png(png, img) else None
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")
    if args.json:
        sys.stdout.write(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def _graph_for(args, m: MapFamily):
    variant = args.variant or ("dbas" if m.tag == "dbas" else None)
    if variant is None:
        raise SystemExit("--variant is required for the cubic and newton families")
    if variant == "dbas":
        return puzzle.build_graph(m, "dbas")
    t = Angle.parse(args.cusp_angle) if args.cusp_angle else None
    if t is None:
        raise SystemExit("--cusp-angle is required for this variant")
    if variant.endswith("renorm"):
        return puzzle.build_graph(m, variant, t0=t.half(), k=args.k)
    return puzzle.build_graph(m, variant, t=t)


# ---------------------------------------------------------------- commands


def cmd_render_julia(args) -> int:
    m = _family(args.family, args.param)
    spec = _spec(args)
    img = render.julia_image(m, spec)
    sidecar = {"family": m.label(), "spec": spec.to_json(), "overlays": {}, "warnings": []}
    if "rays" in spec.overlays:
        try:
            sidecar["overlays"]["rays"] = render.ray_overlay(img, spec, m, "landings" in spec.overlays)
        except Exception as exc:  # overlay failures are reported, not fatal
            sidecar["warnings"].append(f"rays: {exc}")
    if "graph" in spec.overlays or "small-julia" in spec.overlays:
        try:
            g = _graph_for(args, m)
            sidecar["overlays"]["graph"] = render.graph_overlay(img, spec, g, "small-julia" in spec.overlays)
        except (puzzle.GraphConstructionError, boettcher.UnresolvedLabeling, ValueError) as exc:
            sidecar["warnings"].append(f"graph: {exc}")
    _write_image(args, img, sidecar)
    return 0


def cmd_render_param(args) -> int:
    spec = _spec(args)
    img = render.param_image(args.family, spec, args.cap)
    sidecar = {"family": args.family, "spec": spec.to_json(), "cap": args.cap,
               "tol": render.PARAM_TOL, "warnings": []}
    _write_image(args, img, sidecar)
    return 0


def cmd_trace_ray(args) -> int:
    m = _family(args.family, args.param)
    if not args.angle:
        raise SystemExit("--angle is required")
    out = []
    for a in args.angle:
        if args.basin == "external":
            if not m.is_polynomial:
                raise SystemExit("Newton maps have no external rays; pass --basin B1, B2 or B3")
            out.append(boettcher.trace_external_ray(m, a).to_json())
        else:
            out.append(boettcher.trace_internal_ray(m, args.basin, a).to_json())
    _emit(args, out)
    return 0


def _class_json(c) -> dict:
    return {"words": [str(w) for w in c.members], "angle": str(theta(c))}


def cmd_itinerary(args) -> int:
    if args.point is None:
        if not args.angle:
            raise SystemExit("--angle or --point is required")
        rows = []
        for a in args.angle:
            t = Angle.parse(a)
            c = mating.dbas_angle_itinerary(t) if args.convention == "dbas" else itinerary_of_angle(t)
            rows.append({"angle": str(t), "triadic": is_triadic(t), "class": _class_json(c)})
        _emit(args, rows)
        return 0
    m = _family(args.family, args.param)
    g = _graph_for(args, m)
    z = SpherePoint.of(parse_complex(args.point)).to_complex()
    words = puzzle.itinerary_of_point(g, z, args.depth)
    _emit(args, {"point": SpherePoint.of(z).to_json(), "depth": args.depth,
                 "words": ["".join(map(str, w)) for w in words]})
    return 0


def cmd_graph(args) -> int:
    m = _family(args.family, args.param)
    g = _graph_for(args, m)
    payload = g.to_json()
    payload["junctions"] = {k: {"point": SpherePoint.of(z).to_json(), "err": err}
                            for k, (z, err) in g.junctions.items()}
    _emit(args, payload)
    return 0


def cmd_centers(args) -> int:
    cusps = params.cusp_table(args.max_den)
    pairs = [(Angle.parse(r["t"]), m) for r in cusps for m in args.m]
    centers = params.center_table(pairs)
    if args.csv:
        text = "# cusps\n" + params.rows_to_csv(cusps) + "# centers\n" + params.rows_to_csv(centers)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    _emit(args, {"cusps": cusps, "centers": centers})
    return 0


def cmd_correspond(args) -> int:
    t = Angle.parse(args.angle[0]) if args.angle else None
    if args.kind == "center":
        p = params.center_in_copy("cubic", t, args.m)
    elif args.kind in ("cusp", "boundary"):
        p = params.boundary_param("cubic", t)
    else:
        if args.param is None or t is None:
            raise SystemExit("--kind point needs --param and --angle")
        p = params.ParamPoint("cubic", args.param, args.region, t, None, args.m)
    q = params.correspondence(p)
    _emit(args, {"cubic": p.to_json(), "newton": q.to_json()})
    return 0


def cmd_verify(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        print(f"newtonmating: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.suite:
        cfg["suite"] = args.suite
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.depth is not None:
        cfg["depth"] = args.depth
    log.info("config %s", json.dumps(cfg, sort_keys=True))
    checks = suites.run_suite(cfg)
    failed = [c["name"] for c in checks if not c["passed"]]
    report = {"suite": cfg["suite"], "config": cfg, "versions": versions(),
              "tolerances": tolerances(), "checks": checks, "failed": failed,
              "passed": not failed}
    _emit(args, report)
    for c in checks:
        log.info("%s %s", "PASS" if c["passed"] else "FAIL", c["name"])
    return 0 if not failed else EXIT_FAIL


# ------------------------------------------------------------------ parser


def _complex_arg(s: str) -> complex:
    try:
        return parse_complex(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected re,im, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--param", type=_complex_arg, help="map parameter as re,im")
    common.add_argument("--angle", action="append", help="angle p/q (repeatable)")
    common.add_argument("--depth", type=int, default=None, help="itinerary / nest depth")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", help="output path")
    common.add_argument("--json", action="store_true", help="also print JSON to stdout")

    fam = argparse.ArgumentParser(add_help=False)
    fam.add_argument("--family", choices=("dbas", "cubic", "newton"), default="newton")
    fam.add_argument("--variant", choices=puzzle.VARIANTS)
    fam.add_argument("--cusp-angle", help="angle t of the copy (renorm) or boundary point")
    fam.add_argument("--k", type=int, default=None, help="period of t/2 under doubling")

    win = argparse.ArgumentParser(add_help=False)
    win.add_argument("--center", type=_complex_arg, default=0j)
    win.add_argument("--width", type=float, default=4.0)
    win.add_argument("--size", type=_size, default=(400, 400), help="W or WxH pixels")
    win.add_argument("--png", action="store_true", help="also write a PNG when Pillow is present")

    p = argparse.ArgumentParser(prog="newtonmating", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render-julia", parents=[common, fam, win], help="dynamical plane image")
    s.add_argument("--coloring", choices=render.COLORINGS, default="basin")
    s.add_argument("--overlay", action="append", choices=render.OVERLAYS)
    s.add_argument("--max-iter", type=int, default=200)
    s.set_defaults(func=cmd_render_julia, out_default="julia.ppm")

    s = sub.add_parser("render-param", parents=[common, win], help="parameter plane image")
    s.add_argument("--family", choices=("cubic", "newton"), default="cubic")
    s.add_argument("--cap", type=int, default=render.PARAM_CAP)
    s.set_defaults(func=cmd_render_param, out_default="param.ppm")

    s = sub.add_parser("trace-ray", parents=[common, fam], help="external or internal ray")
    s.add_argument("--basin", default="external", help="external, or a basin label such as B1")
    s.set_defaults(func=cmd_trace_ray)

    s = sub.add_parser("itinerary", parents=[common, fam], help="itinerary of an angle or point")
    s.add_argument("--point", help="point re,im (needs a graph: --family/--variant/--cusp-angle)")
    s.add_argument("--convention", choices=("plain", "dbas"), default="plain",
                   help="dbas reads the class of -t")
    s.set_defaults(func=cmd_itinerary)

    s = sub.add_parser("graph", parents=[common, fam], help="invariant graph as JSON")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("centers", parents=[common], help="cusp and center tables")
    s.add_argument("--max-den", type=int, default=7)
    s.add_argument("--m", type=int, action="append", help="renormalization period (repeatable)")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_centers)

    s = sub.add_parser("correspond", parents=[common], help="cubic parameter to Newton parameter")
    s.add_argument("--kind", choices=("cusp", "center", "boundary", "point"), default="cusp")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--region", default="copy", help="region tag for --kind point")
    s.set_defaults(func=cmd_correspond)

    s = sub.add_parser("verify", parents=[common], help="run a verification suite")
    s.add_argument("--config", help="flat key = value file")
    s.add_argument("--suite", choices=suites.SUITES)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s %(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "out_default", None) and not args.out:
        args.out = args.out_default
    if args.command == "itinerary" and args.depth is None:
        args.depth = mating.DEFAULT_DEPTH
    if args.command == "centers" and not args.m:
        args.m = [1]
    _log_run(args.command)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
