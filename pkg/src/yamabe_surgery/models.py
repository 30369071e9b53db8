"""Explicit tubular-neighbourhood models (M, g, W).

Points of the tube are written (x, y): x are coordinates on W (k of
them), y are normal coordinates (q = n - k of them) so that the distance
to W is |y|.  Every other chart used in the package (polar, sphere
bundle, bent hypersurface) is a pullback of ``tube_metric`` through a map
with an analytic Jacobian.
"""
from dataclasses import dataclass, field
from math import pi
from typing import Callable

import numpy as np

from .charts import (angle_box, block_diag, hyperspherical, pullback, stereo,
                     stereo_conformal, unit_sphere_area)
from .curvature import DomainError, MetricField, scalar_curvature, volume

CHARTS = ("stereo", "hyper")
STEREO_RADIUS = 1.1  # sampled |u| stays 0.1 beyond the patch equator


@dataclass(frozen=True)
class ModelManifold:
    name: str
    n: int
    k: int
    epsilon: float
    tube_metric: Callable[[np.ndarray], np.ndarray]
    w_func: Callable[[np.ndarray], np.ndarray]
    w_box: tuple
    params: dict = field(default_factory=dict)
    s_g_exact: float | None = None

    @property
    def q(self):
        return self.n - self.k

    @property
    def tube_chart(self) -> MetricField:
        e = self.epsilon
        return MetricField(self.n, (-np.inf,) * self.k + (-e,) * self.q,
                           (np.inf,) * self.k + (e,) * self.q, self.tube_metric,
                           f"{self.name}:tube")

    @property
    def w_metric(self) -> MetricField:
        return MetricField(self.k, (-np.inf,) * self.k, (np.inf,) * self.k, self.w_func,
                           f"{self.name}:W")

    def w_volume(self):
        return float(np.prod([b - a for a, b in self.w_box])) if self.k else 1.0


@dataclass(frozen=True)
class EndMetric:
    delta: float
    field: MetricField


def _check_dims(n, k, n_range):
    if not (n_range[0] <= n <= n_range[1]):
        raise ValueError(f"ambient dimension n={n} outside {n_range}")
    if not (0 <= k <= n - 3):
        raise ValueError(f"need 0 <= k <= n-3 (codimension >= 3), got n={n}, k={k}")


def _flat_w(k):
    def w(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(k), x.shape[:-1] + (k, k)).copy()
    return w


def flat_torus_model(n: int, k: int, epsilon: float) -> ModelManifold:
    """W = T^k inside the flat T^n; the tube metric is the identity."""
    _check_dims(n, k, (3, 6))
    if not 0 < epsilon < 0.25:
        raise ValueError("flat torus model needs 0 < epsilon < 1/4")

    def tube(p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()

    return ModelManifold("flat_torus", n, k, float(epsilon), tube, _flat_w(k),
                         ((0.0, 2 * pi),) * k, {"n": n, "k": k, "epsilon": epsilon}, 0.0)


def _sin_ratio_defect(rho):
    """(sin^2(rho)/rho^2 - 1)/rho^2, smooth through rho = 0."""
    rho = np.asarray(rho, dtype=float)
    r2 = rho * rho
    small = rho < 1e-2
    safe = np.where(small, 1.0, rho)
    direct = ((np.sin(safe) / safe) ** 2 - 1.0) / (safe * safe)
    series = -1.0 / 3.0 + 2.0 * r2 / 45.0 - r2 * r2 / 315.0
    return np.where(small, series, direct)


def sphere_point_model(n: int, epsilon: float) -> ModelManifold:
    """W = a point in the unit round S^n, in geodesic normal coordinates.

    dr^2 + sin^2(r) dOmega^2 written in Cartesian normal coordinates y:
    g = I + f(r) (r^2 I - y y^T) with f = (sin^2 r / r^2 - 1) / r^2.
    """
    _check_dims(n, 0, (3, 5))
    if not 0 < epsilon < pi / 2:
        raise ValueError("sphere point model needs 0 < epsilon < pi/2")

    def tube(p):
        y = np.asarray(p, dtype=float)
        r2 = np.sum(y * y, axis=-1)
        f = _sin_ratio_defect(np.sqrt(r2))
        eye = np.eye(n)
        return eye + f[..., None, None] * (r2[..., None, None] * eye
                                           - y[..., :, None] * y[..., None, :])

    return ModelManifold("sphere_point", n, 0, float(epsilon), tube, _flat_w(0), (),
                         {"n": n, "epsilon": epsilon}, float(n * (n - 1)))


def perturbed_tube_model(n: int, k: int, epsilon: float, amplitude: float) -> ModelManifold:
    """Flat tube plus the cross term amplitude * y_1 * sin(x_1) dx_1 dy_1.

    The cross term is bounded by amplitude * r * |sin x_1| and vanishes on W.
    """
    _check_dims(n, k, (3, 6))
    if k < 1:
        raise ValueError("perturbed tube model needs k >= 1 (the term uses x_1)")
    if not 0 < epsilon < 0.25:
        raise ValueError("perturbed tube model needs 0 < epsilon < 1/4")
    c = float(amplitude)

    def tube(p):
        p = np.asarray(p, dtype=float)
        g = np.broadcast_to(np.eye(n), p.shape[:-1] + (n, n)).copy()
        cross = c * p[..., k] * np.sin(p[..., 0])
        g[..., 0, k] += cross
        g[..., k, 0] += cross
        return g

    model = ModelManifold("perturbed_tube", n, k, float(epsilon), tube, _flat_w(k),
                          ((0.0, 2 * pi),) * k,
                          {"n": n, "k": k, "epsilon": epsilon, "amplitude": c}, None)
    grid = _tube_grid(model, 7)
    try:
        model.tube_chart.check_spd(grid)
    except DomainError as exc:
        raise DomainError(f"perturbed tube indefinite for amplitude={c}: {exc}") from None
    return model


def build_model(name: str, **params) -> ModelManifold:
    """Model lookup by the names used in plan files."""
    builders = {"flat_torus": flat_torus_model, "sphere_point": sphere_point_model,
                "perturbed_tube": perturbed_tube_model}
    if name not in builders:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(builders)}")
    return builders[name](**params)


def _tube_grid(model, m):
    axes = [np.linspace(a, b, m) for a, b in model.w_box]
    axes += [np.linspace(-model.epsilon, model.epsilon, m)] * model.q
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    r = np.linalg.norm(pts[:, model.k:], axis=-1)
    return pts[r < model.epsilon]


# ---------------------------------------------------------------------------
# derived charts
# ---------------------------------------------------------------------------

def _sphere_map(ang, chart, patch):
    if chart == "stereo":
        return stereo(ang, patch)
    if chart == "hyper":
        return hyperspherical(ang)
    raise ValueError(f"chart must be one of {CHARTS}")


def _angle_bounds(m, chart):
    if chart == "stereo":
        return (-np.inf,) * m, (np.inf,) * m
    box = angle_box(m)
    return tuple(a for a, _ in box), tuple(b for _, b in box)


def angular_box(m, chart):
    if chart == "stereo":
        return [(-STEREO_RADIUS, STEREO_RADIUS)] * m
    return angle_box(m)


def round_metric(ang, chart="stereo", patch=1):
    """Unit round metric on S^m in the given chart."""
    ang = np.asarray(ang, dtype=float)
    m = ang.shape[-1]
    if chart == "stereo":
        return stereo_conformal(ang)[..., None, None] * np.eye(m)
    _, jac = hyperspherical(ang)
    return np.einsum("...ai,...aj->...ij", jac, jac)


def polar_chart(model: ModelManifold, chart="hyper", patch=1) -> MetricField:
    """Tube metric in (x, rho, angles) coordinates."""
    k, q, n = model.k, model.q, model.n

    def func(p):
        p = np.asarray(p, dtype=float)
        x, rho, ang = p[..., :k], p[..., k], p[..., k + 1:]
        sig, dsig = _sphere_map(ang, chart, patch)
        amb = np.concatenate([x, rho[..., None] * sig], axis=-1)
        jac = np.zeros(p.shape[:-1] + (n, n))
        jac[..., :k, :k] = np.eye(k)
        jac[..., k:, k] = sig
        jac[..., k:, k + 1:] = rho[..., None, None] * dsig
        return pullback(model.tube_metric(amb), jac)

    lo, hi = _angle_bounds(q - 1, chart)
    return MetricField(n, (-np.inf,) * k + (0.0,) + lo, (np.inf,) * k + (model.epsilon,) + hi,
                       func, f"{model.name}:polar")


def sphere_bundle_metric(model: ModelManifold, rho: float, chart="stereo", patch=1) -> MetricField:
    """Restriction of the tube metric to the rho-sphere bundle, in (x, angles)."""
    k, q = model.k, model.q

    def func(p):
        p = np.asarray(p, dtype=float)
        x, ang = p[..., :k], p[..., k:]
        sig, dsig = _sphere_map(ang, chart, patch)
        amb = np.concatenate([x, rho * sig], axis=-1)
        jac = np.zeros(p.shape[:-1] + (model.n, model.n - 1))
        jac[..., :k, :k] = np.eye(k)
        jac[..., k:, k:] = rho * dsig
        return pullback(model.tube_metric(amb), jac)

    lo, hi = _angle_bounds(q - 1, chart)
    return MetricField(model.n - 1, (-np.inf,) * k + lo, (np.inf,) * k + hi, func,
                       f"{model.name}:S^{rho:.3g}N")


def product_end_metric(w_func, k, m, radius, chart="stereo", patch=1, name="product_end"):
    """w_func(x) + radius^2 * round S^m on W x S^m."""
    def func(p):
        p = np.asarray(p, dtype=float)
        return block_diag(w_func(p[..., :k]), radius ** 2 * round_metric(p[..., k:], chart, patch))

    lo, hi = _angle_bounds(m, chart)
    return MetricField(k + m, (-np.inf,) * k + lo, (np.inf,) * k + hi, func, name)


def end_metrics(model: ModelManifold, delta: float, chart="stereo", patch=1):
    """(g_delta, g_delta^N): restricted metric and product metric at radius delta."""
    if not 0 < delta < model.epsilon:
        raise ValueError(f"delta={delta} must lie in (0, epsilon={model.epsilon})")
    g_d = sphere_bundle_metric(model, delta, chart, patch)
    g_n = product_end_metric(model.w_func, model.k, model.q - 1, delta, chart, patch,
                             f"{model.name}:g_delta^N")
    return EndMetric(delta, g_d), EndMetric(delta, g_n)


def end_box(model: ModelManifold, chart="stereo"):
    """Sampling/integration box for (x, angles) end charts."""
    return list(model.w_box) + angular_box(model.q - 1, chart)


def radial_defect(model: ModelManifold, pts):
    """|r_* e_1 - 1| = | |dr|_g - 1 | at tube points with y != 0."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    y = pts[:, model.k:]
    rho = np.linalg.norm(y, axis=-1)
    if np.any(rho == 0):
        raise DomainError("radial defect undefined on W itself")
    dr = np.zeros_like(pts)
    dr[:, model.k:] = y / rho[:, None]
    g = model.tube_metric(pts)
    sol = np.linalg.solve(g, dr[..., None])[..., 0]
    return np.abs(np.sqrt(np.sum(dr * sol, axis=-1)) - 1.0)


# ---------------------------------------------------------------------------
# volumes and curvature statistics of the ambient model
# ---------------------------------------------------------------------------

def tube_shell_volume(model: ModelManifold, r_a: float, r_b: float, cells=8,
                      radial_cells=None) -> float:
    """Vol_g(N_{r_b} - N_{r_a}) by quadrature in polar coordinates."""
    if not 0 <= r_a < r_b <= model.epsilon:
        raise ValueError("need 0 <= r_a < r_b <= epsilon")
    box = list(model.w_box) + [(r_a, r_b)] + angle_box(model.q - 1)
    ncell = [cells] * model.n
    ncell[model.k] = cells if radial_cells is None else radial_cells
    return volume(polar_chart(model, "hyper"), box, ncell)


def sphere_bundle_area(model: ModelManifold, rho: float, cells=8) -> float:
    """(n-1)-volume of the rho-sphere bundle."""
    return volume(sphere_bundle_metric(model, rho, "hyper"), end_box(model, "hyper"), cells)


def shell_constant(model: ModelManifold, delta: float, cells=8, radii=16, safety=1.05) -> float:
    """A constant K with Vol(N_rb - N_ra) <= (rb - ra) K for rb <= delta.

    Takes the largest sampled sphere-bundle area over radii in (0, delta]
    and multiplies by ``safety``.
    """
    if not 0 < delta < model.epsilon:
        raise ValueError(f"delta={delta} must lie in (0, epsilon={model.epsilon})")
    rs = delta * np.arange(1, radii + 1) / radii
    return safety * max(sphere_bundle_area(model, float(r), cells) for r in rs)


def ambient_volume(model: ModelManifold, cells=8) -> float:
    """Vol_g(M), treating any perturbation as confined to the tube."""
    if model.name == "sphere_point":
        return unit_sphere_area(model.n)
    flat = (2 * pi) ** model.n
    if model.name == "flat_torus":
        return flat
    flat_tube = model.w_volume() * unit_sphere_area(model.q - 1) * model.epsilon ** model.q / model.q
    return flat + tube_shell_volume(model, 0.0, model.epsilon, cells) - flat_tube


def ambient_scalar_range(model: ModelManifold, count=200, seed=0, step=1e-3):
    """(min, max) of the ambient scalar curvature over random tube samples."""
    if model.name == "flat_torus":
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    e = model.epsilon - 5 * step
    lo = np.array([a for a, _ in model.w_box] + [-e] * model.q)
    hi = np.array([b for _, b in model.w_box] + [e] * model.q)
    pts = lo + (hi - lo) * rng.random((4 * count, model.n))
    pts = pts[np.linalg.norm(pts[:, model.k:], axis=-1) < e][:count]
    s = scalar_curvature(model.tube_chart, pts, step)
    return float(np.min(s)), float(np.max(s))
