"""The bending curve in the (t, r) half-plane and the hypersurface it sweeps.

The curve descends vertically from r = epsilon to r = r1, bends through a
schedule of circular arcs and straight runs until its tangent is
horizontal, then runs horizontally at r = r_f.  theta is the angle
between the tangent and the r-axis, so the unit tangent is
(sin theta, -cos theta) in (t, r).
"""
from dataclasses import dataclass, field
from math import asin, cos, inf, pi, sin

import numpy as np

from . import _kernels
from .charts import hyperspherical, pullback, stereo
from .curvature import (DomainError, MetricField, scalar_curvature,
                        scalar_curvature_with_error, volume)
from .models import ModelManifold, angular_box, radial_defect, tube_shell_volume

HALF_PI = 0.5 * pi
MAX_STAGES = 200
# Radii this small still square and invert safely in double precision;
# stage-local charts keep even the shortest stages resolvable.
MIN_RADIUS = 1e-100


class CurveConstructionError(RuntimeError):
    pass


class CertificateError(AssertionError):
    """A sampled inequality failed; ``report`` carries the violating sample."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class BendingParams:
    r1: float
    eps0: float
    A: float
    n: int
    k: int
    s_g_min: float = 0.0
    epsilon: float | None = None

    def __post_init__(self):
        if not self.r1 > 0:
            raise ValueError("r1 must be positive")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.A < 0:
            raise ValueError("A must be non-negative")
        if not 0 <= self.k <= self.n - 3:
            raise ValueError("need k <= n - 3")
        if self.epsilon is not None and not self.r1 < self.epsilon:
            raise ValueError("need r1 < epsilon")

    @property
    def q(self):
        return self.n - self.k


@dataclass(frozen=True)
class CurveStage:
    kind: str  # vertical | arc | straight | horizontal
    length: float
    theta_start: float
    theta_end: float
    kappa: float
    kappa_bound: float
    r_start: float
    r_end: float
    t_start: float
    t_end: float
    s_start: float
    # for arcs: sin of the angle before the bend, whether the bend belongs
    # to the early phase (sin theta < 1/2), and the previous bend radius
    sin_before: float = 0.0
    early: bool = False
    r_prev_bend: float = 0.0

    @property
    def s_end(self):
        return self.s_start + self.length


@dataclass
class BendingCurve:
    stages: list
    params: BendingParams
    theta0: float
    graph_start: float  # arclength where the graph part starts (r = r1)
    graph_end: float    # arclength where the horizontal part starts
    t_f: float
    r_f: float
    _arrays: tuple = field(default=None, repr=False)

    def __post_init__(self):
        st = self.stages
        self._arrays = tuple(np.array(v, dtype=float) for v in (
            [s.s_start for s in st], [s.theta_start for s in st], [s.kappa for s in st],
            [s.t_start for s in st], [s.r_start for s in st]))

    @property
    def length(self):
        return self.stages[-1].s_end

    @property
    def graph_length(self):
        return self.graph_end - self.graph_start

    def arcs(self):
        return [s for s in self.stages if s.kind == "arc"]

    def evaluate(self, s):
        """(t, r, theta, kappa, stage_index) at arclengths s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < -1e-15) or np.any(s > self.length * (1 + 1e-12)):
            raise DomainError("arclength outside the curve")
        return _kernels.eval_curve(s, *self._arrays)

    def evaluate_local(self, j, ds):
        """(t, r, theta, kappa) at offsets ds from the start of stage j."""
        st = self.stages[j]
        ds = np.atleast_1d(np.asarray(ds, dtype=float))
        if np.any(ds < -1e-300) or np.any(ds > st.length * (1 + 1e-12)):
            raise DomainError(f"offset outside stage {j}")
        t, r, th, k, _ = _kernels.eval_curve(
            ds, np.zeros(1), np.array([st.theta_start]), np.array([st.kappa]),
            np.array([st.t_start]), np.array([st.r_start]))
        return t, r, th, k

    def stage_points(self, per_stage=8, kinds=None, lo=0.0, hi=1.0):
        """Samples inside every stage, evaluated in stage-local arclength.

        Returns (stage_index, offset, t, r, theta, kappa) arrays.
        """
        cols = [[] for _ in range(6)]
        for j, st in enumerate(self.stages):
            if kinds is not None and st.kind not in kinds:
                continue
            ds = st.length * np.linspace(lo, hi, per_stage)
            t, r, th, k = self.evaluate_local(j, ds)
            for c, v in zip(cols, (np.full(per_stage, j), ds, t, r, th, k)):
                c.append(v)
        return tuple(np.concatenate(c) for c in cols)

    def theta_of_s(self, s):
        return self.evaluate(s)[2]

    def r_of_s(self, s):
        return self.evaluate(s)[1]

    def t_of_s(self, s):
        return self.evaluate(s)[0]

    def kappa_of_s(self, s):
        return self.evaluate(s)[3]



def choose_theta0(params: BendingParams) -> float:
    """Initial bend angle with (A + 4n/r1^2) sin(theta0) = eps0 / 2."""
    x = params.eps0 / (2.0 * (params.A + 4.0 * params.n / params.r1 ** 2))
    return min(asin(min(x, 1.0)), 0.25 * pi)


def _advance(theta, kappa, length, t, r):
    half = 0.5 * kappa * length
    chord = sin(half) / kappa if kappa != 0.0 else 0.5 * length
    mid = theta + half
    return theta + kappa * length, t + 2.0 * sin(mid) * chord, r - 2.0 * cos(mid) * chord


class _Builder:
    def __init__(self):
        self.stages = []
        self.s = 0.0
        self.t = 0.0
        self.r = 0.0
        self.theta = 0.0

    def add(self, kind, length, kappa, bound, **extra):
        th1, t1, r1 = _advance(self.theta, kappa, length, self.t, self.r)
        if kind == "arc" and th1 > HALF_PI:
            th1 = HALF_PI
        self.stages.append(CurveStage(kind, length, self.theta, th1, kappa, bound, self.r, r1,
                                      self.t, t1, self.s, **extra))
        self.s += length
        self.theta, self.t, self.r = th1, t1, r1
        if len(self.stages) > MAX_STAGES:
            raise CurveConstructionError(
                f"more than {MAX_STAGES} stages; parameters outside the schedule's range")
        if not self.r > MIN_RADIUS:
            raise CurveConstructionError(f"radius underflow (r = {self.r:.3e} < {MIN_RADIUS})")


def _bend(b, kappa, length, bound, **extra):
    if b.theta + kappa * length > HALF_PI:
        length = (HALF_PI - b.theta) / kappa
    b.add("arc", length, kappa, bound, **extra)


def construct_gamma(params: BendingParams, horizontal_length=None) -> BendingCurve:
    """Build the bend schedule.

    First bend: length r1/2, curvature 2 theta0 / r1.  While
    sin(theta) < 1/2 each straight run stops at
    min(sin(theta)/A, 3/4 r_prev); afterwards straight runs are minimal.
    Every later bend at radius r_j has length r_j/2 and curvature
    sin(theta)/(2 r_j), so theta grows by sin(theta)/4.
    """
    b = _Builder()
    r1 = params.r1
    if params.epsilon is not None:
        b.r = params.epsilon
        b.add("vertical", params.epsilon - r1, 0.0, 0.0)
    b.r = r1
    graph_start = b.s
    theta0 = choose_theta0(params)
    _bend(b, 2.0 * theta0 / r1, 0.5 * r1, 2.0 / r1, sin_before=0.0, early=True, r_prev_bend=r1)
    r_prev = r1
    while b.theta < HALF_PI:
        st = sin(b.theta)
        early = st < 0.5
        minimal = b.r / 100.0
        if early:
            target = min(st / params.A if params.A > 0 else inf, 0.75 * r_prev)
            run = (b.r - target) / cos(b.theta) if b.r > target else minimal
        else:
            run = minimal
        b.add("straight", run, 0.0, 0.0)
        r_j = b.r
        kappa = st / (2.0 * r_j)
        _bend(b, kappa, 0.5 * r_j, kappa, sin_before=st, early=early, r_prev_bend=r_prev)
        r_prev = r_j
    graph_end = b.s
    t_f, r_f = b.t, b.r
    hl = r_f / 10.0 if horizontal_length is None else float(horizontal_length)
    if hl > 0:
        b.add("horizontal", hl, 0.0, 0.0)
    curve = BendingCurve(b.stages, params, theta0, graph_start, graph_end, t_f, r_f)
    if not t_f <= 7.0 * r1:
        raise CurveConstructionError(f"t_f = {t_f} exceeds 7 r1 = {7 * r1}")
    return curve


def rescale_arcs(curve: BendingCurve, factor: float) -> BendingCurve:
    """Same stage lengths with every arc curvature multiplied by ``factor``.

    Used as a negative control; the result violates the schedule's bounds.
    The angle is clamped at pi/2, after which remaining graph stages are
    dropped and the horizontal run is kept.
    """
    b = _Builder()
    b.r = curve.stages[0].r_start
    graph_start = curve.graph_start
    horizontal = None
    for st in curve.stages:
        if st.kind == "horizontal":
            horizontal = st.length
            continue
        if b.theta >= HALF_PI:
            continue
        if st.kind == "arc":
            k = st.kappa * factor
            extra = dict(sin_before=st.sin_before, early=st.early, r_prev_bend=st.r_prev_bend)
            _bend(b, k, st.length, st.kappa_bound, **extra)
        else:
            b.add(st.kind, st.length, 0.0, 0.0)
    graph_end = b.s
    t_f, r_f = b.t, b.r
    if horizontal:
        b.add("horizontal", horizontal, 0.0, 0.0)
    return BendingCurve(b.stages, curve.params, curve.theta0, graph_start, graph_end, t_f, r_f)


# ---------------------------------------------------------------------------
# scalar curvature along the curve
# ---------------------------------------------------------------------------

def tube_curvature_formula(r, theta, kappa, params: BendingParams, O1, kappa_coeff=1.0):
    """s_g + O1 sin^2 + (q-1)(q-2) sin^2 / r^2 - c (q-1) kappa sin / r.

    ``kappa_coeff`` is c; the induced-metric oracle measures c = 2.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    q = params.q
    sn = np.sin(theta)
    return (params.s_g_min + O1 * sn ** 2 + (q - 1) * (q - 2) * sn ** 2 / r ** 2
            - kappa_coeff * (q - 1) * kappa * sn / r)


@dataclass(frozen=True)
class CertificateReport:
    name: str
    passed: bool
    minimum: float
    threshold: float
    samples: int
    worst: dict

    @property
    def margin(self):
        return self.minimum - self.threshold

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "minimum": float(self.minimum),
                "threshold": float(self.threshold), "margin": float(self.margin),
                "samples": int(self.samples),
                "worst": {k: [float(x) for x in v] if isinstance(v, (list, tuple, np.ndarray))
                          else float(v) for k, v in self.worst.items()}}

    def raise_if_failed(self):
        if not self.passed:
            raise CertificateError(f"{self.name} failed: minimum {self.minimum:.6e} < "
                                   f"threshold {self.threshold:.6e} at {self.worst}", self)


def certify_curvature_bound(curve: BendingCurve, params: BendingParams, samples=10_000,
                            kappa_coeff=1.0, per_stage=8) -> CertificateReport:
    """Worst-case (O1 = -A) formula value along the curve vs s_g_min - eps0.

    Uniform arclength samples plus ``per_stage`` stage-local samples in
    every stage, so the short stages near r_f are never skipped.
    """
    s = np.linspace(0.0, curve.length * (1 - 1e-12), samples)
    _, r_u, th_u, k_u, _ = curve.evaluate(s)
    _, _, _, r_s, th_s, k_s = curve.stage_points(per_stage)
    r = np.concatenate([r_u, r_s])
    theta = np.concatenate([th_u, th_s])
    kappa = np.concatenate([k_u, k_s])
    vals = tube_curvature_formula(r, theta, kappa, params, -params.A, kappa_coeff)
    # the r^-2 terms can cancel exactly; allow for their rounding
    q, sn = params.q, np.sin(theta)
    scale = ((q - 1) * (q - 2) * sn ** 2 / r ** 2 + abs(kappa_coeff) * (q - 1) * kappa * sn / r
             + params.A + abs(params.s_g_min))
    threshold = params.s_g_min - params.eps0
    slack = vals - threshold + 64 * np.finfo(float).eps * scale
    i = int(np.argmin(slack))
    worst = {"r": r[i], "theta": theta[i], "kappa": kappa[i], "value": vals[i]}
    name = "bend_formula" if kappa_coeff == 1.0 else f"bend_formula_c{kappa_coeff:.4g}"
    return CertificateReport(name, bool(slack[i] >= 0), float(vals[i]), threshold,
                             len(r), worst)


# ---------------------------------------------------------------------------
# the bent hypersurface
# ---------------------------------------------------------------------------

def induced_tube_metric(curve: BendingCurve, model: ModelManifold, chart="stereo",
                        patch=1, stage=None) -> MetricField:
    """Metric of M^gamma in coordinates (x, angles, s).

    With ``stage=j`` the last coordinate is arclength measured from the
    start of stage j, which keeps very short stages resolvable.
    """
    k, q, n = model.k, model.q, model.n
    smap = stereo if chart == "stereo" else (lambda a, p: hyperspherical(a))
    if stage is None:
        along = lambda s: curve.evaluate(s)[1:3]
        s_hi = curve.length
    else:
        along = lambda s: curve.evaluate_local(stage, s)[1:3]
        s_hi = curve.stages[stage].length

    def func(p):
        p = np.asarray(p, dtype=float)
        shape = p.shape[:-1]
        flat = p.reshape(-1, n)
        r, theta = along(flat[:, -1])
        x, ang = flat[:, :k], flat[:, k:n - 1]
        sig, dsig = smap(ang, patch)
        amb = np.concatenate([x, r[:, None] * sig], axis=-1)
        jac = np.zeros((len(flat), n, n))
        jac[:, :k, :k] = np.eye(k)
        jac[:, k:, k:n - 1] = r[:, None, None] * dsig
        jac[:, k:, n - 1] = -np.cos(theta)[:, None] * sig
        g = pullback(model.tube_metric(amb), jac)
        g[:, n - 1, n - 1] += np.sin(theta) ** 2
        return g.reshape(shape + (n, n))

    if chart == "stereo":
        lo, hi = (-np.inf,) * (q - 1), (np.inf,) * (q - 1)
    else:
        box = angular_box(q - 1, "hyper")
        lo, hi = tuple(a for a, _ in box), tuple(b for _, b in box)
    return MetricField(n, (-np.inf,) * k + lo + (0.0,), (np.inf,) * k + hi + (s_hi,),
                       func, f"{model.name}:M^gamma")


def induced_curvature_samples(curve: BendingCurve, model: ModelManifold, per_stage=3,
                              kinds=("vertical", "arc", "straight", "horizontal"),
                              seed=0, base=1e-3, rel=1e-3, ambient=False):
    """Finite-difference scalar curvature of M^gamma at points inside stages.

    Samples sit in the middle 40% of each stage, in stage-local charts, so
    stencils stay clear of the curvature jumps at the joins.  One Richardson
    step removes the h^2 error, which matters once the round-sphere curvature
    ~1/r^2 dwarfs the bending terms.  The step along
    the curve is min(rel * r, length / 40); other axes use ``base``.
    With ``ambient=True`` the ambient scalar curvature at the image point is
    returned too.  Returns a dict of arrays.
    """
    rng = np.random.default_rng(seed)
    k, m, n = model.k, model.q - 1, model.n
    idx, ds, t, r, theta, kappa = curve.stage_points(per_stage, kinds, 0.3, 0.7)
    count = len(ds)
    x = (np.column_stack([rng.uniform(a, b, count) for a, b in model.w_box])
         if k else np.empty((count, 0)))
    u = rng.uniform(-0.8, 0.8, (count, m))
    vals = np.empty(count)
    errs = np.empty(count)
    amb = np.zeros(count)
    tube = model.tube_chart
    amb_step = min(1e-3, model.epsilon / 10.0)
    for i in range(count):
        j = int(idx[i])
        metric = induced_tube_metric(curve, model, stage=j)
        h = np.full(n, base)
        h[-1] = min(rel * r[i], curve.stages[j].length / 40.0)
        vals[i], errs[i] = scalar_curvature_with_error(
            metric, np.concatenate([x[i], u[i], [ds[i]]]), h)
        if ambient and model.s_g_exact is None:
            sig, _ = stereo(u[i])
            amb[i] = scalar_curvature(tube, np.concatenate([x[i], r[i] * sig]), amb_step)
        elif ambient:
            amb[i] = model.s_g_exact
    return {"stage": idx, "offset": ds, "x": x, "u": u, "scalar": vals, "error": errs,
            "ambient": amb,
            "r": r, "theta": theta, "kappa": kappa}


def fit_kappa_coefficient(scalar, r, theta, kappa, q, ambient=0.0):
    """Least-squares c in  s = ambient + (q-1)(q-2) sin^2/r^2 - c (q-1) kappa sin/r."""
    sn = np.sin(theta)
    y = np.asarray(scalar) - ambient - (q - 1) * (q - 2) * sn ** 2 / r ** 2
    z = -(q - 1) * kappa * sn / r
    mask = np.abs(z) > 0
    if not np.any(mask):
        raise ValueError("no samples with nonzero curvature term")
    # scale each row to unit z so huge-curvature samples do not dominate
    return float(np.mean(y[mask] / z[mask]))



def straight_probe(params: BendingParams, theta: float, r_start: float, length: float) -> BendingCurve:
    """A single straight segment at angle theta, used to probe the O(1) term."""
    if not 0 < theta <= HALF_PI:
        raise ValueError("probe angle must lie in (0, pi/2]")
    r_end = r_start - cos(theta) * length
    if not r_end > 0:
        raise ValueError("probe leaves the tube")
    st = CurveStage("straight", length, theta, theta, 0.0, 0.0, r_start, r_end, 0.0,
                    sin(theta) * length, 0.0)
    return BendingCurve([st], params, theta, 0.0, length, st.t_end, r_end)


def measure_o1(model: ModelManifold, params: BendingParams,
               thetas=(pi / 6, pi / 3, HALF_PI), radii=(0.25, 0.5, 1.0), per_probe=3,
               seed=0):
    """Sampled |O1| on straight probes, where the bending term vanishes.

    On a straight piece s = s_g + O1 sin^2 + (q-1)(q-2) sin^2 / r^2, so
    O1 = (s - s_g - (q-1)(q-2) sin^2 / r^2) / sin^2 with s and s_g measured
    by finite differences.  Probe radii are fractions of r1.
    """
    q = model.q
    worst = 0.0
    for i, th in enumerate(thetas):
        for j, frac in enumerate(radii):
            r0 = frac * params.r1
            probe = straight_probe(params, th, r0, 0.1 * r0)
            d = induced_curvature_samples(probe, model, per_probe, ("straight",),
                                          seed=seed + 31 * i + j, ambient=True)
            sn2 = np.sin(d["theta"]) ** 2
            o1 = (d["scalar"] - d["ambient"] - (q - 1) * (q - 2) * sn2 / d["r"] ** 2) / sn2
            worst = max(worst, float(np.max(np.abs(o1))))
    return worst

# ---------------------------------------------------------------------------
# volume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaVolume:
    bound: float
    quadrature: float
    base_volume: float
    K: float
    t_f: float
    defect: float

    @property
    def slack(self):
        return self.bound - self.quadrature


def graph_volume(curve: BendingCurve, model: ModelManifold, cells=6, s_cells=64,
                 kinds=("arc", "straight")) -> float:
    """Quadrature volume of the graph part of M^gamma (stage by stage)."""
    base = list(model.w_box) + angular_box(model.q - 1, "hyper")
    ncell = [cells] * (model.n - 1) + [s_cells]
    total = 0.0
    for j, st in enumerate(curve.stages):
        if st.kind not in kinds or st.length <= 0:
            continue
        metric = induced_tube_metric(curve, model, chart="hyper", stage=j)
        total += volume(metric, base + [(0.0, st.length)], ncell)
    return total


def gamma_volume_estimate(curve: BendingCurve, model: ModelManifold, K: float, cells=6,
                          s_cells=64, radial_cells=256, defect_samples=200, tol=1e-5,
                          seed=0) -> GammaVolume:
    """Bound Vol_g(N_r1) + 2 K t_f (1 + defect) and the quadrature it bounds.

    Both volumes share the angular grid, so its error cancels; the radial
    and arclength axes are refined instead.  ``tol`` is relative.
    """
    r1 = curve.params.r1
    base = tube_shell_volume(model, 0.0, r1, cells, radial_cells)
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(a, b, defect_samples) for a, b in model.w_box]
                          + [rng.uniform(-r1, r1, (defect_samples, model.q))]) \
        if model.k else rng.uniform(-r1, r1, (defect_samples, model.q))
    pts = pts[np.linalg.norm(pts[:, model.k:], axis=-1) > 0]
    defect = float(np.max(radial_defect(model, pts)))
    bound = base + 2.0 * K * curve.t_f * (1.0 + defect)
    quad = graph_volume(curve, model, cells, s_cells)
    out = GammaVolume(bound, quad, base, K, curve.t_f, defect)
    if quad > bound + tol * max(1.0, bound):
        raise CertificateError(f"graph volume {quad:.6e} exceeds bound {bound:.6e}")
    return out


def audit_curve(curve: BendingCurve) -> dict:
    """Check the schedule's structural claims; returns a dict of booleans."""
    st = curve.stages
    graph = [s for s in st if s.kind in ("arc", "straight")]
    arcs = curve.arcs()
    thetas = np.array([s.theta_start for s in st] + [st[-1].theta_end])
    joins_ok = all(abs(a.theta_end - b.theta_start) <= 1e-12 and abs(a.r_end - b.r_start) <= 1e-12
                   and abs(a.t_end - b.t_start) <= 1e-12 for a, b in zip(st, st[1:]))
    kappa_ok = all(a.kappa <= a.kappa_bound * (1 + 1e-12) for a in arcs)
    early = [a for a in arcs[1:] if a.early]
    decrease_ok = all(a.r_prev_bend - a.r_start >= 0.25 * a.r_prev_bend * (1 - 1e-12) for a in early)
    late = [a for a in arcs[1:] if not a.early]
    late_steps_ok = all(a.theta_end - a.theta_start >= 0.125 - 1e-12 or a is late[-1] for a in late)
    return {
        "t_f_le_7r1": curve.t_f <= 7 * curve.params.r1,
        "graph_length_le_7r1": sum(s.length for s in graph) <= 7 * curve.params.r1,
        "theta_monotone": bool(np.all(np.diff(thetas) >= -1e-15)),
        "theta_ends": thetas[0] == 0.0 and abs(thetas[-1] - HALF_PI) <= 1e-12,
        "r_decreasing_on_graph": all(s.r_end < s.r_start for s in graph),
        "joins_continuous": joins_ok,
        "kappa_within_bound": kappa_ok,
        "decrease_quarter": decrease_ok,
        "late_bends_le_10": len(late) <= 10,
        "late_increments_ge_eighth": late_steps_ok,
    }
