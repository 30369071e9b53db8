"""Command-line entry point.

    yamabe-surgery gamma    --config plan.json [--csv curve.csv]
    yamabe-surgery homotopy --config plan.json --which H1 --delta 0.05
    yamabe-surgery yamabe glue --y1 -1 --y2 -1 --n 4
    yamabe-surgery plan     --config plan.json --out report.json

Exit codes: 0 all claims pass, 2 a certificate failed, 1 usage or I/O error.
"""
import argparse
import json
import sys

from .bending import CurveConstructionError, audit_curve, certify_curvature_bound
from .homotopy import (NotPositiveScalarError, choose_stretch, end_grid, h1_homotopy,
                       h2_homotopy, homotopy_stats, t_grid, verify_positive_scalar)
from .models import build_model
from .pipeline import (KAPPA_COEFF, PlanError, SurgeryPlan, canonical_json, emit_report,
                       export_curve_csv, plan_curve, run_surgery_plan, w_target)
from .yamabe import (DegenerateSplitError, UnsupportedCaseError, glue, kobayashi_lower_bound,
                     optimal_split)

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _plan(args):
    cfg = _load_config(args.config)
    for key in ("r1", "eps0", "delta", "sphere_radius", "A"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.seed is not None:
        cfg["seed"] = args.seed
    if "model" not in cfg:
        raise PlanError("a model is required (use --config)")
    return SurgeryPlan.from_dict(cfg)


def _print(obj):
    sys.stdout.write(canonical_json(obj))


def cmd_gamma(args):
    plan = _plan(args)
    model = build_model(plan.model["name"], **{k: v for k, v in plan.model.items() if k != "name"})
    s_g_min = model.s_g_exact if model.s_g_exact is not None else 0.0
    curve, params = plan_curve(plan, model, plan.A or 0.0, s_g_min)
    cert = certify_curvature_bound(curve, params, plan.grid.bend_samples, KAPPA_COEFF)
    audit = audit_curve(curve)
    if args.csv:
        export_curve_csv(curve, args.csv, args.samples)
    _print({"theta0": curve.theta0, "t_f": curve.t_f, "r_f": curve.r_f,
            "stages": len(curve.stages), "graph_length": curve.graph_length,
            "audit": audit, "certificate": cert.to_dict()})
    return EXIT_OK if cert.passed and all(audit.values()) else EXIT_FAIL


def cmd_homotopy(args):
    plan = _plan(args)
    model = build_model(plan.model["name"], **{k: v for k, v in plan.model.items() if k != "name"})
    delta = args.delta if args.delta is not None else (plan.delta or 0.05)
    if args.which == "H1":
        homs = [h1_homotopy(model, delta, "stereo", p) for p in (1, -1)]
    else:
        radius = plan.sphere_radius or delta / 2.0
        h = w_target(model, plan.target_w_metric)
        homs = [h2_homotopy(model, delta, h, radius, "stereo", p) for p in (1, -1)]
    pts = end_grid(model, plan.grid.end_points)
    ts = t_grid(plan.grid.times)
    stats = [homotopy_stats(H, pts, ts, plan.grid.fd_step) for H in homs]
    worst = max(stats, key=lambda s: s.a_star)
    a = args.a if args.a is not None else choose_stretch(worst)
    reps = [verify_positive_scalar(H, a, pts, ts, plan.grid.fd_step) for H in homs]
    _print({"which": args.which, "delta": delta, "a": a,
            "stats": [s.to_dict() for s in stats], "certificates": [r.to_dict() for r in reps]})
    return EXIT_OK if all(r.passed for r in reps) else EXIT_FAIL


def cmd_yamabe(args):
    if args.op == "glue":
        _print(glue(args.y1, args.y2, args.n).to_dict())
    elif args.op == "split":
        try:
            split = optimal_split(args.a1, args.a2, args.n)
            _print({"split": split.to_dict(), "degenerate": False})
        except DegenerateSplitError as exc:
            _print({"split": exc.limit.to_dict(), "degenerate": True})
    else:
        _print({"bound": kobayashi_lower_bound(args.min_s, args.vol, args.n)})
    return EXIT_OK


def cmd_plan(args):
    plan = _plan(args)
    report = run_surgery_plan(plan)
    if args.out:
        emit_report(report, args.out)
    else:
        _print(report)
    if args.csv:
        model = build_model(plan.model["name"],
                            **{k: v for k, v in plan.model.items() if k != "name"})
        A = report["phases"]["bend"]["A"] if "bend" in report["phases"] else 0.0
        curve, _ = plan_curve(plan, model, A, report["s_g_min"])
        export_curve_csv(curve, args.csv, args.samples)
    sys.stderr.write("all claims pass\n" if report["passed"] else
                     f"certificate failure (phase: {report['aborted_at']})\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="yamabe-surgery", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON plan file")
        sp.add_argument("--seed", type=int, help="seed for randomized sampling")

    g = sub.add_parser("gamma", help="build and certify the bending curve")
    common(g)
    for key in ("r1", "eps0", "A"):
        g.add_argument(f"--{key}", type=float)
    g.add_argument("--csv", help="write curve samples here")
    g.add_argument("--samples", type=int, default=400)

    h = sub.add_parser("homotopy", help="stats and stretch certificate for H1 or H2")
    common(h)
    h.add_argument("--which", choices=("H1", "H2"), default="H1")
    h.add_argument("--delta", type=float)
    h.add_argument("--sphere-radius", dest="sphere_radius", type=float)
    h.add_argument("--a", type=float, help="stretch factor (default 1.1 a_star)")

    y = sub.add_parser("yamabe", help="gluing-bound arithmetic")
    common(y)
    ysub = y.add_subparsers(dest="op", required=True)
    yg = ysub.add_parser("glue")
    yg.add_argument("--y1", type=float, required=True)
    yg.add_argument("--y2", type=float, required=True)
    yg.add_argument("--n", type=int, required=True)
    ys = ysub.add_parser("split")
    ys.add_argument("--a1", type=float, required=True)
    ys.add_argument("--a2", type=float, required=True)
    ys.add_argument("--n", type=int, required=True)
    yk = ysub.add_parser("kobayashi")
    yk.add_argument("--min-s", dest="min_s", type=float, required=True)
    yk.add_argument("--vol", type=float, required=True)
    yk.add_argument("--n", type=int, required=True)

    pl = sub.add_parser("plan", help="run a full surgery plan")
    common(pl)
    for key in ("r1", "eps0", "delta", "A"):
        pl.add_argument(f"--{key}", type=float)
    pl.add_argument("--sphere-radius", dest="sphere_radius", type=float)
    pl.add_argument("--out", help="report path (default: stdout)")
    pl.add_argument("--csv", help="also write curve samples here")
    pl.add_argument("--samples", type=int, default=400)
    return p


COMMANDS = {"gamma": cmd_gamma, "homotopy": cmd_homotopy, "yamabe": cmd_yamabe,
            "plan": cmd_plan}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (CurveConstructionError, NotPositiveScalarError, AssertionError) as exc:
        sys.stderr.write(f"certificate failure: {exc}\n")
        return EXIT_FAIL
    except (PlanError, UnsupportedCaseError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
