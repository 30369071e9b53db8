"""Metric homotopies, the stretched product metric and its curvature term.

For a family g^t on X the metric G_a = g^t + a^2 dt^2 on X x [0, 1] has

    s_{G_a}(x, t) = s_{g^t}(x) + B(x, t) / a^2,

with B built from the t-derivatives of g^t only.  Linear homotopies carry
exact t-derivatives, so finite differences enter only through s_{g^t}.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bending import CertificateError, CertificateReport
from ._kernels import sqrt_det
from .curvature import DomainError, MetricField, scalar_curvature, volume
from .models import (CHARTS, ModelManifold, angular_box, end_metrics,
                     product_end_metric)

DEFAULT_GRID = 17


class NotPositiveScalarError(ValueError):
    """The homotopy has a metric with nonpositive scalar curvature on the grid."""


@dataclass(frozen=True)
class MetricHomotopy:
    """A family g^t, t in [0, 1], of metrics on one chart of X.

    ``field(x, t)``, ``dt_field(x, t)`` and ``dtt_field(x, t)`` take points
    (..., dim) and a scalar t and return (..., dim, dim) arrays.
    """

    base_dim: int
    lo: tuple
    hi: tuple
    field: Callable
    dt_field: Callable
    dtt_field: Callable
    name: str = "homotopy"

    def at(self, t: float) -> MetricField:
        t = float(t)
        return MetricField(self.base_dim, self.lo, self.hi,
                           lambda p: self.field(p, t), f"{self.name}@t={t:.6g}")


def linear_homotopy(g_start: MetricField, g_end: MetricField, name=None) -> MetricHomotopy:
    """g^t = (1 - t) g_start + t g_end with exact t-derivatives."""
    if g_start.dim != g_end.dim:
        raise ValueError(f"dimension mismatch: {g_start.dim} vs {g_end.dim}")
    lo = tuple(np.maximum(g_start.lo, g_end.lo))
    hi = tuple(np.minimum(g_start.hi, g_end.hi))

    def f(p, t):
        if t == 0.0:
            return g_start(p)
        if t == 1.0:
            return g_end(p)
        return (1.0 - t) * g_start(p) + t * g_end(p)

    def df(p, t):
        return g_end(p) - g_start(p)

    def ddf(p, t):
        a = g_start(p)
        return np.zeros_like(a)

    return MetricHomotopy(g_start.dim, lo, hi, f, df, ddf,
                          name or f"{g_start.name}->{g_end.name}")


def reparametrize(H: MetricHomotopy, offset: float, slope: float) -> MetricHomotopy:
    """The family t -> g^{offset + slope t} (affine change of time)."""
    return MetricHomotopy(
        H.base_dim, H.lo, H.hi,
        lambda p, t: H.field(p, offset + slope * t),
        lambda p, t: slope * H.dt_field(p, offset + slope * t),
        lambda p, t: slope ** 2 * H.dtt_field(p, offset + slope * t),
        f"{H.name}[{offset:g}+{slope:g}t]")


def b_from_derivatives(g, gdot, gddot):
    """B for batched g, dg/dt, d^2g/dt^2 of shape (..., n, n).

    B = 1/4 [tr(A A) - (tr A)^2] - 1/2 [tr(g^-1 g'') + d/dt tr A],  A = g^-1 g',
    where d/dt tr A = tr(g^-1 g'') - tr(A A).
    """
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise DomainError("singular metric in B term") from exc
    a = ginv @ gdot
    tr_a = np.trace(a, axis1=-2, axis2=-1)
    tr_aa = np.einsum("...ij,...ji->...", a, a)
    tr_gg = np.einsum("...ij,...ji->...", ginv, gddot)
    dt_tr_a = tr_gg - tr_aa
    return 0.25 * (tr_aa - tr_a ** 2) - 0.5 * (tr_gg + dt_tr_a)


def b_term(H: MetricHomotopy, x, t: float):
    """B(x, t); float for a single point, array for a batch."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    val = b_from_derivatives(H.field(pts, t), H.dt_field(pts, t), H.dtt_field(pts, t))
    return float(val[0]) if x.ndim == 1 else val


def grid_points(box, per_axis=DEFAULT_GRID, margin=0.0):
    """Tensor grid including the (margin-shrunk) box edges."""
    axes = [np.linspace(a + margin, b - margin, per_axis) for a, b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def t_grid(count=DEFAULT_GRID):
    return np.linspace(0.0, 1.0, count)


@dataclass(frozen=True)
class HomotopyStats:
    """Grid extrema of s_{g^t} and B.

    ``a_star`` makes s + B/a^2 > 0 for every a > a_star: it uses the most
    negative B.  ``a_star_literal`` is sqrt(max(B_max, 0)/s_min), built
    from the largest B, and is reported for comparison only.
    """

    s_min: float
    B_max: float
    B_min: float
    a_star: float
    a_star_literal: float
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return {"s_min": self.s_min, "B_max": self.B_max, "B_min": self.B_min,
                "a_star": self.a_star, "a_star_literal": self.a_star_literal,
                "grid": dict(self.grid)}


def _sweep(H, x_pts, ts, step):
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    s = np.empty((len(ts), len(x_pts)))
    b = np.empty_like(s)
    for i, t in enumerate(ts):
        if not np.all(np.isfinite(sqrt_det(H.field(x_pts, t)))):
            raise DomainError(f"{H.name}: g^t not positive-definite at t={t}")
        s[i] = scalar_curvature(H.at(t), x_pts, step)
        b[i] = b_term(H, x_pts, t)
    return s, b


def homotopy_stats(H: MetricHomotopy, x_pts, ts, step=1e-3) -> HomotopyStats:
    """s(H), B(H) over the grid x_pts x ts, plus the stretch threshold."""
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    ts = np.asarray(ts, dtype=float)
    if len(x_pts) == 0 or len(ts) == 0:
        raise ValueError("empty grid")
    s, b = _sweep(H, x_pts, ts, step)
    s_min, b_max, b_min = float(s.min()), float(b.max()), float(b.min())
    if not s_min > 0:
        i, j = np.unravel_index(np.argmin(s), s.shape)
        raise NotPositiveScalarError(
            f"homotopy not positive-scalar-curvature: s={s_min:.6g} at t={ts[i]:.6g}, "
            f"x={x_pts[j]}")
    return HomotopyStats(
        s_min, b_max, b_min,
        float(np.sqrt(max(-b_min, 0.0) / s_min)) + 0.0,  # + 0.0 turns -0.0 into 0.0
        float(np.sqrt(max(b_max, 0.0) / s_min)) + 0.0,
        {"points": int(len(x_pts)), "times": int(len(ts)), "step": float(step)})


@dataclass(frozen=True)
class StretchedMetric:
    a: float
    field: MetricField


def stretched_metric(H: MetricHomotopy, a: float) -> StretchedMetric:
    """g^{tau/a} + d tau^2 on X x [0, a]."""
    if not a > 0:
        raise ValueError("stretch factor a must be positive")
    n = H.base_dim

    def func(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, n + 1)
        tau = flat[:, n] / a
        out = np.zeros((len(flat), n + 1, n + 1))
        # group by time value; stencils share few distinct tau
        for tv in np.unique(tau):
            sel = tau == tv
            out[sel, :n, :n] = H.field(flat[sel, :n], float(tv))
        out[:, n, n] = 1.0
        return out.reshape(p.shape[:-1] + (n + 1, n + 1))

    return StretchedMetric(float(a), MetricField(n + 1, tuple(H.lo) + (0.0,),
                                                 tuple(H.hi) + (float(a),), func,
                                                 f"{H.name}:stretched"))


def product_chart_metric(H: MetricHomotopy, a: float) -> MetricField:
    """G_a = g^t + a^2 dt^2 on X x [0, 1]; isometric to the stretched metric."""
    if not a > 0:
        raise ValueError("stretch factor a must be positive")
    n = H.base_dim

    def func(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, n + 1)
        out = np.zeros((len(flat), n + 1, n + 1))
        for tv in np.unique(flat[:, n]):
            sel = flat[:, n] == tv
            out[sel, :n, :n] = H.field(flat[sel, :n], float(tv))
        out[:, n, n] = a * a
        return out.reshape(p.shape[:-1] + (n + 1, n + 1))

    return MetricField(n + 1, tuple(H.lo) + (0.0,), tuple(H.hi) + (1.0,), func,
                       f"{H.name}:G_a")


def stretched_scalar_formula(H: MetricHomotopy, x_pts, t: float, a: float, step=1e-3):
    """s_{g^t}(x) + B(x, t)/a^2 at a batch of points."""
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    return scalar_curvature(H.at(t), x_pts, step) + b_term(H, x_pts, t) / a ** 2


def verify_positive_scalar(H: MetricHomotopy, a: float, x_pts, ts, step=1e-3,
                           name="stretch") -> CertificateReport:
    """Grid check that s_{g^t} + B/a^2 > 0; reports the smallest value."""
    if not a > 0:
        raise ValueError("stretch factor a must be positive")
    x_pts = np.atleast_2d(np.asarray(x_pts, dtype=float))
    ts = np.asarray(ts, dtype=float)
    s, b = _sweep(H, x_pts, ts, step)
    vals = s + b / a ** 2
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    worst = {"t": float(ts[i]), "x": [float(v) for v in x_pts[j]],
             "s": float(s[i, j]), "B": float(b[i, j]), "a": float(a)}
    v = float(vals[i, j])
    return CertificateReport(name, bool(v > 0), v, 0.0, int(vals.size), worst)


@dataclass(frozen=True)
class HomotopyVolume:
    bound: float
    quadrature: float
    sup_volume: float
    a: float

    def to_dict(self):
        return {"bound": self.bound, "quadrature": self.quadrature,
                "sup_volume": self.sup_volume, "a": self.a}


def homotopy_volume_bound(H: MetricHomotopy, a: float, box, ts, cells=8, t_cells=8,
                          tol=1e-3) -> HomotopyVolume:
    """sup_t Vol(g^t) * a, checked against quadrature of the stretched metric."""
    ts = np.asarray(ts, dtype=float)
    if len(ts) == 0:
        raise ValueError("empty time grid")
    vols = [volume(H.at(t), box, cells) for t in ts]
    sup = float(max(vols))
    bound = sup * a
    cells_all = [cells] * H.base_dim + [t_cells]
    quad = volume(stretched_metric(H, a).field, list(box) + [(0.0, a)], cells_all)
    out = HomotopyVolume(bound, float(quad), sup, float(a))
    if quad > bound + tol:
        raise CertificateError(
            f"{H.name}: stretched volume {quad:.6g} exceeds bound {bound:.6g}",
            CertificateReport("product_volume", False, quad, bound, len(ts),
                              out.to_dict()))
    return out


def choose_stretch(stats: HomotopyStats, factor=1.1, tiny=1e-6) -> float:
    """a = factor * a_star, or 1 when any a > 0 works.

    An a_star below ``tiny`` is rounding noise in B and is treated as zero;
    a vanishing a would make the stretched chart degenerate.
    """
    return factor * stats.a_star if stats.a_star > tiny else 1.0


# ---------------------------------------------------------------------------
# the two end homotopies of the construction
# ---------------------------------------------------------------------------

def h1_homotopy(model: ModelManifold, delta: float, chart="stereo", patch=1) -> MetricHomotopy:
    """g_delta -> g_delta^N: restricted metric to the product end metric."""
    g_d, g_n = end_metrics(model, delta, chart, patch)
    return linear_homotopy(g_d.field, g_n.field, f"{model.name}:H1(delta={delta:g})")


def h2_homotopy(model: ModelManifold, delta: float, h_func, radius=None, chart="stereo",
                patch=1) -> MetricHomotopy:
    """g_delta^N -> h + radius^2 round; radius defaults to delta (W-part only)."""
    radius = delta if radius is None else radius
    if not radius > 0:
        raise ValueError("sphere radius must be positive")
    _, g_n = end_metrics(model, delta, chart, patch)
    target = product_end_metric(h_func, model.k, model.q - 1, radius, chart, patch,
                                f"{model.name}:h+dE(r={radius:g})")
    return linear_homotopy(g_n.field, target, f"{model.name}:H2(delta={delta:g})")


def end_grid(model: ModelManifold, per_axis=DEFAULT_GRID, chart="stereo", margin=0.05):
    """Grid on W x S^m; the stereo box reaches past the patch equator."""
    if chart not in CHARTS:
        raise ValueError(f"chart must be one of {CHARTS}")
    box = list(model.w_box) + angular_box(model.q - 1, chart)
    return grid_points(box, per_axis, margin)


__all__ = ["MetricHomotopy", "HomotopyStats", "StretchedMetric", "HomotopyVolume",
           "NotPositiveScalarError", "linear_homotopy", "reparametrize", "b_term",
           "b_from_derivatives", "homotopy_stats", "stretched_metric",
           "product_chart_metric", "stretched_scalar_formula", "verify_positive_scalar",
           "homotopy_volume_bound", "choose_stretch", "h1_homotopy", "h2_homotopy",
           "grid_points", "t_grid", "end_grid"]
