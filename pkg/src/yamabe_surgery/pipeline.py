"""End-to-end surgery runs: bend, two stretched homotopies, and a report.

A plan fixes a model, the bend radius r1 and the total slack eps0.  The
slack is split evenly over three phases (bend, H1, H2) for both scalar
curvature and volume.  Every phase is measured by finite differences and
quadrature, and the report lists one pass/fail entry per claim.
"""
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bending import (BendingParams, CertificateError, CurveConstructionError, audit_curve,
                      certify_curvature_bound, construct_gamma, gamma_volume_estimate,
                      induced_tube_metric, measure_o1,
                      rescale_arcs, tube_curvature_formula)
from . import precise
from .charts import block_diag
from .curvature import DomainError, scalar_curvature
from .homotopy import (choose_stretch, end_grid, h1_homotopy, h2_homotopy,
                       homotopy_stats, homotopy_volume_bound, product_chart_metric,
                       stretched_metric, stretched_scalar_formula, t_grid,
                       verify_positive_scalar, NotPositiveScalarError)
from .models import (ambient_scalar_range, ambient_volume, build_model, end_box,
                     end_metrics, round_metric, shell_constant, sphere_bundle_area)

TOL = 1e-3
KAPPA_COEFF = 2.0  # coefficient of the kappa sin(theta)/r term; see bending tests
PHASES = ("bend", "H1", "H2")
GRID_ENV = "SURGERY_GRID_SCALE"


class PlanError(ValueError):
    """Invalid plan or configuration."""


def grid_scale():
    raw = os.environ.get(GRID_ENV, "1")
    try:
        v = float(raw)
    except ValueError:
        raise PlanError(f"{GRID_ENV} must be a number, got {raw!r}") from None
    if not v > 0:
        raise PlanError(f"{GRID_ENV} must be positive")
    return v


@dataclass(frozen=True)
class GridSettings:
    end_points: int = 7
    times: int = 9
    bend_samples: int = 10_000
    per_stage: int = 2
    cells: int = 6
    fd_step: float = 1e-3
    oracle_samples: int = 6

    def scaled(self, s):
        up = lambda v, lo: max(lo, int(round(v * s)))
        return GridSettings(up(self.end_points, 3), up(self.times, 3), up(self.bend_samples, 100),
                            up(self.per_stage, 1), up(self.cells, 2), self.fd_step,
                            up(self.oracle_samples, 1))


@dataclass(frozen=True)
class SurgeryPlan:
    """Parameters of one run.

    ``target_w_metric`` is {"kind": "same"} (keep g|_W) or
    {"kind": "scaled", "scale": c} (c times g|_W).  ``delta`` caps the
    end radius; the run uses the radius where the bend ends.
    ``arc_curvature_scale`` != 1 multiplies every arc curvature and exists
    for negative controls.
    """

    model: dict
    r1: float
    eps0: float
    delta: float | None = None
    target_w_metric: dict = field(default_factory=lambda: {"kind": "same"})
    sphere_radius: float | None = None
    A: float | None = None
    arc_curvature_scale: float = 1.0
    grid: GridSettings = field(default_factory=GridSettings)
    seed: int = 0
    name: str = "plan"

    def __post_init__(self):
        if not self.eps0 > 0:
            raise PlanError("eps0 must be positive")
        if not self.r1 > 0:
            raise PlanError("r1 must be positive")
        if self.delta is not None and not self.delta > 0:
            raise PlanError("delta must be positive")
        if self.sphere_radius is not None and not self.sphere_radius > 0:
            raise PlanError("sphere_radius must be positive")
        if self.A is not None and self.A < 0:
            raise PlanError("A must be non-negative")
        kind = self.target_w_metric.get("kind")
        if kind not in ("same", "scaled"):
            raise PlanError(f"unknown target_w_metric kind {kind!r}")
        if kind == "scaled" and not self.target_w_metric.get("scale", 0) > 0:
            raise PlanError("scaled target_w_metric needs a positive scale")
        if "name" not in self.model:
            raise PlanError("model needs a name")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise PlanError(f"unknown plan keys: {sorted(extra)}")
        if "grid" in d:
            try:
                d["grid"] = GridSettings(**d["grid"])
            except TypeError as exc:
                raise PlanError(f"bad grid settings: {exc}") from None
        try:
            return cls(**d)
        except TypeError as exc:
            raise PlanError(str(exc)) from None

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


def w_target(model, target):
    """The metric h on W picked by the plan."""
    scale = 1.0 if target.get("kind") == "same" else float(target["scale"])
    return lambda x: scale * model.w_func(x)


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------

def _claim(claims, name, passed, **detail):
    claims.append({"name": name, "passed": bool(passed), **detail})
    return bool(passed)


def plan_curve(plan, model, A, s_g_min):
    """The bending curve of a plan (bend budget eps0/3), and its parameters."""
    params = BendingParams(plan.r1, plan.eps0 / len(PHASES), A, model.n, model.k, s_g_min,
                           model.epsilon)
    curve = construct_gamma(params)
    if plan.arc_curvature_scale != 1.0:
        curve = rescale_arcs(curve, plan.arc_curvature_scale)
    return curve, params


def _bend_phase(plan, model, grid, s_g_min, budget, claims, out):
    A = plan.A
    if A is None:
        probe = BendingParams(plan.r1, budget, 0.0, model.n, model.k, s_g_min, model.epsilon)
        A = max(0.01, 1.1 * measure_o1(model, probe, seed=plan.seed))
    curve, params = plan_curve(plan, model, A, s_g_min)
    audit = audit_curve(curve)
    cert = certify_curvature_bound(curve, params, grid.bend_samples, kappa_coeff=KAPPA_COEFF)
    literal = certify_curvature_bound(curve, params, grid.bend_samples, kappa_coeff=1.0)
    fd = precise.induced_curvature_samples(curve, model, grid.per_stage, seed=plan.seed,
                                           kappa_coeff=KAPPA_COEFF)
    fd_min = float(np.min(fd["scalar"]))
    # residual against the formula without the O(1) term, scaled by |O1| room
    o1_room = A * np.sin(fd["theta"]) ** 2 + abs(s_g_min) + TOL
    worst_rel = float(np.max(np.abs(fd["residual"]) / (o1_room + np.abs(fd["formula"]) * 1e-12)))
    K = shell_constant(model, plan.r1, cells=grid.cells)
    vol = gamma_volume_estimate(curve, model, K, cells=grid.cells)
    horizontal = [st for st in curve.stages if st.kind == "horizontal"]
    h_len = horizontal[0].length if horizontal else 0.0
    h_vol = sphere_bundle_area(model, curve.r_f, grid.cells) * h_len
    added = vol.quadrature + h_vol - vol.base_volume
    ok = True
    ok &= _claim(claims, "bend_audit", all(audit.values()),
                 failed=[k for k, v in audit.items() if not v])
    ok &= _claim(claims, "bend_certificate", cert.passed, minimum=cert.minimum,
                 threshold=cert.threshold)
    ok &= _claim(claims, "bend_oracle_min", fd_min >= s_g_min - budget - TOL,
                 minimum=fd_min, threshold=s_g_min - budget)
    ok &= _claim(claims, "bend_volume", added <= budget and vol.quadrature <= vol.bound,
                 added=added, budget=budget, quadrature=vol.quadrature, bound=vol.bound)
    out["bend"] = {
        "A": A, "theta0": curve.theta0, "t_f": curve.t_f, "r_f": curve.r_f,
        "stages": len(curve.stages), "graph_length": curve.graph_length,
        "arc_curvature_scale": plan.arc_curvature_scale,
        "certificate": cert.to_dict(), "certificate_literal": literal.to_dict(),
        "oracle": {"samples": int(len(fd["scalar"])), "min": fd_min,
                   "max_residual_over_o1_room": worst_rel},
        "volume": {"graph_quadrature": vol.quadrature, "graph_bound": vol.bound,
                   "tube_volume": vol.base_volume, "horizontal": h_vol, "added": added,
                   "K": K},
        "audit": audit,
    }
    return ok, curve, params, fd_min, vol.base_volume, vol.quadrature + h_vol


def _homotopy_phase(label, plan, model, grid, homs, homs_hyper, s_g_min, budget, claims, out,
                    rng):
    ts = t_grid(grid.times)
    pts = end_grid(model, grid.end_points, "stereo")
    stats = [homotopy_stats(H, pts, ts, grid.fd_step) for H in homs]
    s_min = min(st.s_min for st in stats)
    b_min = min(st.B_min for st in stats)
    b_max = max(st.B_max for st in stats)
    a_star = max(st.a_star for st in stats)
    a = choose_stretch(type(stats[0])(s_min, b_max, b_min, a_star,
                                      max(st.a_star_literal for st in stats)))
    reps = [verify_positive_scalar(H, a, pts, ts, grid.fd_step, f"{label}_stretch")
            for H in homs]
    stretched_min = min(r.minimum for r in reps)
    # direct finite differences on g^t + a^2 dt^2 at a few grid samples
    oracle = []
    for H in homs:
        G = product_chart_metric(H, a)
        for _ in range(grid.oracle_samples):
            x = pts[rng.integers(len(pts))]
            t = float(rng.uniform(0.1, 0.9))
            direct = scalar_curvature(G, np.append(x, t), grid.fd_step)
            formula = float(stretched_scalar_formula(H, x, t, a, grid.fd_step)[0])
            oracle.append(abs(direct - formula) / (1.0 + abs(direct)))
    vols = [homotopy_volume_bound(H, a, end_box(model, "hyper"), ts[:: max(1, len(ts) // 4)],
                                  cells=grid.cells, t_cells=4) for H in homs_hyper]
    vol = vols[0]
    ok = True
    ok &= _claim(claims, f"{label}_positive",
                 all(r.passed for r in reps) and stretched_min >= s_g_min - budget,
                 minimum=stretched_min, threshold=max(0.0, s_g_min - budget))
    ok &= _claim(claims, f"{label}_formula_oracle", max(oracle) <= TOL,
                 max_rel_residual=max(oracle))
    ok &= _claim(claims, f"{label}_volume", vol.bound <= budget and vol.quadrature <= vol.bound + TOL,
                 bound=vol.bound, quadrature=vol.quadrature, budget=budget)
    out[label] = {"stats": {"s_min": s_min, "B_max": b_max, "B_min": b_min, "a_star": a_star,
                            "a_star_literal": max(st.a_star_literal for st in stats),
                            "grid": {"points": int(len(pts)), "times": int(len(ts)),
                                     "patches": len(homs)}},
                  "a": a, "stretched_min": stretched_min,
                  "volume": vol.to_dict(), "oracle_max_rel_residual": max(oracle)}
    return ok, stretched_min, vol.quadrature, a


def _join_residual(curve, model, grid):
    """Bent end (horizontal stage) against g_delta + ds^2 on the end grid."""
    j = [i for i, st in enumerate(curve.stages) if st.kind == "horizontal"]
    if not j:
        return math.inf
    j = j[0]
    g_d, _ = end_metrics(model, curve.r_f)
    pts = end_grid(model, grid.end_points)
    ds = 0.5 * curve.stages[j].length
    bent = induced_tube_metric(curve, model, stage=j)(np.column_stack([pts, np.full(len(pts), ds)]))
    ref = block_diag(g_d.field(pts), np.ones((len(pts), 1, 1)))
    return float(np.max(np.abs(bent - ref)))


def run_surgery_plan(plan: SurgeryPlan) -> dict:
    """Run all phases and return the report as a plain dict.

    A failing phase stops the run; ``aborted_at`` names it.
    """
    grid = plan.grid.scaled(grid_scale())
    rng = np.random.default_rng(plan.seed)
    params = {k: v for k, v in plan.model.items() if k != "name"}
    model = build_model(plan.model["name"], **params)
    if not plan.r1 < model.epsilon:
        raise PlanError(f"r1={plan.r1} must be below the tube radius {model.epsilon}")
    if model.s_g_exact is not None:
        s_g_min = model.s_g_exact
    else:
        s_g_min = min(0.0, ambient_scalar_range(model, seed=plan.seed)[0])
    vol_g = ambient_volume(model, grid.cells)
    budget = plan.eps0 / len(PHASES)
    claims, phases = [], {}
    report = {
        "tool": "yamabe_surgery", "version": __version__, "plan": plan.to_dict(),
        "n": model.n, "k": model.k, "eps0": plan.eps0, "s_g_min": s_g_min,
        "volume_g": vol_g, "volume_budget": vol_g + plan.eps0,
        "phase_budgets": {"curvature": [budget] * 3, "volume": [budget] * 3},
        "claims": claims, "phases": phases, "aborted_at": None,
    }

    def finish(aborted=None):
        report["aborted_at"] = aborted
        report["passed"] = aborted is None and all(c["passed"] for c in claims)
        return report

    try:
        ok, curve, bparams, bend_min, tube_vol, bent_vol = _bend_phase(
            plan, model, grid, s_g_min, budget, claims, phases)
    except (CurveConstructionError, CertificateError, DomainError) as exc:
        _claim(claims, "bend_construction", False, error=str(exc))
        return finish("bend")
    if not ok:
        return finish("bend")

    delta = curve.r_f
    if plan.delta is not None and delta > plan.delta:
        _claim(claims, "delta_cap", False, r_f=delta, cap=plan.delta)
        return finish("bend")
    radius = plan.sphere_radius if plan.sphere_radius is not None else delta / 2.0
    h = w_target(model, plan.target_w_metric)
    patches = (1, -1)
    try:
        H1 = [h1_homotopy(model, delta, "stereo", p) for p in patches]
        ok1, min1, vol1, a1 = _homotopy_phase(
            "H1", plan, model, grid, H1, [h1_homotopy(model, delta, "hyper")],
            s_g_min, budget, claims, phases, rng)
    except (NotPositiveScalarError, CertificateError, DomainError) as exc:
        _claim(claims, "H1_run", False, error=str(exc))
        return finish("H1")
    if not ok1:
        return finish("H1")
    try:
        H2 = [h2_homotopy(model, delta, h, radius, "stereo", p) for p in patches]
        ok2, min2, vol2, a2 = _homotopy_phase(
            "H2", plan, model, grid, H2, [h2_homotopy(model, delta, h, radius, "hyper")],
            s_g_min, budget, claims, phases, rng)
    except (NotPositiveScalarError, CertificateError, DomainError) as exc:
        _claim(claims, "H2_run", False, error=str(exc))
        return finish("H2")
    if not ok2:
        return finish("H2")

    # the end of H2, stretched, against h + r^2 round + dt^2
    pts = end_grid(model, grid.end_points)
    end = stretched_metric(H2[0], a2).field(np.column_stack([pts, np.full(len(pts), a2)]))
    target = block_diag(block_diag(h(pts[:, :model.k]),
                                   radius ** 2 * round_metric(pts[:, model.k:])),
                        np.ones((len(pts), 1, 1)))
    end_residual = float(np.max(np.abs(end - target)))
    joins = {"bend_H1": _join_residual(curve, model, grid),
             "H1_H2": float(np.max(np.abs(H1[0].field(pts, 1.0) - H2[0].field(pts, 0.0))))}

    s_min = min(s_g_min, bend_min, min1, min2)
    volume = vol_g - tube_vol + bent_vol + vol1 + vol2
    _claim(claims, "end_form", end_residual <= TOL, residual=end_residual)
    _claim(claims, "phase_joins", max(joins.values()) <= TOL, **joins)
    _claim(claims, "budget_arithmetic", sum(report["phase_budgets"]["curvature"]) <= plan.eps0
           * (1 + 1e-12) and sum(report["phase_budgets"]["volume"]) <= plan.eps0 * (1 + 1e-12))
    _claim(claims, "scalar_curvature", s_min >= s_g_min - plan.eps0 - TOL,
           measured=s_min, threshold=s_g_min - plan.eps0)
    _claim(claims, "volume", volume <= vol_g + plan.eps0 + TOL,
           measured=volume, budget=vol_g + plan.eps0)
    report.update({
        "delta": delta, "sphere_radius": radius, "s_min_measured": s_min,
        "volume_measured": volume, "end_form_residual": end_residual,
        "join_residuals": joins,
        "end": {"k": model.k, "n": model.n, "w_box": [list(b) for b in model.w_box],
                "target_w_metric": plan.target_w_metric, "sphere_radius": radius},
    })
    return finish()


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _canon(obj, ind=0):
    pad = "  " * (ind + 1)
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(obj if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return json.dumps(str(v))
        return "%.12e" % v
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_canon(obj[k], ind + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * ind + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[\n" + ",\n".join(pad + _canon(v, ind + 1) for v in obj) + "\n" + "  " * ind + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(report) -> str:
    """Sorted keys, two-space indent, floats as %.12e."""
    return _canon(report) + "\n"


def emit_report(report, path):
    """Atomically write the canonical JSON; the directory must exist."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"directory does not exist: {directory}")
    text = canonical_json(report)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_report(path):
    with open(path) as fh:
        return json.load(fh)


CSV_HEADER = "s,t,r,theta,kappa,stage,formula_value"


def export_curve_csv(curve, path, samples=400, O1=None, kappa_coeff=KAPPA_COEFF):
    """Uniform arclength samples of the curve; samples + 1 rows after the header.

    ``formula_value`` is the worst-case curvature formula (O1 = -A).
    """
    if samples < 1:
        raise ValueError("need at least one sample interval")
    s = np.linspace(0.0, curve.length, samples + 1)
    t, r, theta, kappa, idx = curve.evaluate(s)
    o1 = -curve.params.A if O1 is None else O1
    f = tube_curvature_formula(r, theta, kappa, curve.params, o1, kappa_coeff)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"directory does not exist: {directory}")
    lines = [CSV_HEADER]
    for row in zip(s, t, r, theta, kappa, idx, f):
        lines.append("%.12e,%.12e,%.12e,%.12e,%.12e,%d,%.12e" % row)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return len(lines) - 1
