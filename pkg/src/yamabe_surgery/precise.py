"""Arbitrary-precision finite-difference curvature for the bent tube.

Along most of the bend the scalar curvature of M^gamma is a difference of
two terms of size 1/r^2 that agree to a relative 1 - sin^2(theta), with
theta as small as 1e-5.  Double precision cannot resolve that, so this
module repeats the construction in mpmath: the model tube metrics, the
stereographic chart, the curve stages and the curvature algebra.  The
working precision and step are chosen per sample from the expected size of
the curvature so the absolute error stays below a requested tolerance.
"""
from math import ceil, log10

import mpmath as mp
import numpy as np

from .bending import BendingCurve
from .models import ModelManifold


def _sin_ratio_defect(rho):
    """(sin^2 rho / rho^2 - 1) / rho^2, with extra digits against cancellation."""
    if rho == 0:
        return mp.mpf(-1) / 3
    lost = max(0, int(ceil(-2 * mp.log10(rho)))) + 10
    with mp.workdps(mp.mp.dps + lost):
        r = +rho
        return +((mp.sin(r) ** 2 / r ** 2 - 1) / r ** 2)


def tube_metric(model: ModelManifold):
    """mpmath version of the model's tube metric: point list -> matrix."""
    n, k = model.n, model.k
    if model.name == "flat_torus":
        return lambda p: mp.eye(n)
    if model.name == "perturbed_tube":
        c = mp.mpf(model.params["amplitude"])

        def pert(p):
            g = mp.eye(n)
            g[0, k] += c * p[k] * mp.sin(p[0])
            g[k, 0] = g[0, k]
            return g
        return pert
    if model.name == "sphere_point":
        def sph(p):
            r2 = mp.fsum(y * y for y in p)
            f = _sin_ratio_defect(mp.sqrt(r2))
            g = mp.eye(n)
            for i in range(n):
                for j in range(n):
                    g[i, j] += f * ((r2 if i == j else 0) - p[i] * p[j])
            return g
        return sph
    raise ValueError(f"no high-precision metric for model {model.name!r}")


def stereo(u):
    """Inverse stereographic map from the north pole, with Jacobian."""
    m = len(u)
    q = mp.fsum(v * v for v in u)
    den = 1 + q
    sigma = [2 * v / den for v in u] + [(q - 1) / den]
    jac = mp.matrix(m + 1, m)
    for a in range(m):
        for j in range(m):
            jac[a, j] = (2 / den if a == j else 0) - 4 * u[a] * u[j] / den ** 2
    for j in range(m):
        jac[m, j] = 4 * u[j] / den ** 2
    return sigma, jac


def stage_point(stage, ds):
    """(r, theta) at offset ds into a constant-curvature stage."""
    k = mp.mpf(stage.kappa)
    th0 = mp.mpf(stage.theta_start)
    half = k * ds / 2
    chord = mp.sin(half) / k if k != 0 else ds / 2
    return mp.mpf(stage.r_start) - 2 * mp.cos(th0 + half) * chord, th0 + k * ds


def induced_metric(curve: BendingCurve, model: ModelManifold, j: int):
    """Metric of M^gamma in (x, u, s) with s local to stage j."""
    k, n = model.k, model.n
    amb = tube_metric(model)
    stage = curve.stages[j]

    def g(p):
        x, u, s = p[:k], p[k:n - 1], p[n - 1]
        r, th = stage_point(stage, s)
        sig, dsig = stereo(u)
        point = list(x) + [r * v for v in sig]
        jac = mp.matrix(n, n)
        for i in range(k):
            jac[i, i] = 1
        for a in range(n - k):
            for b in range(n - k - 1):
                jac[k + a, k + b] = r * dsig[a, b]
            jac[k + a, n - 1] = -mp.cos(th) * sig[a]
        out = jac.T * amb(point) * jac
        out[n - 1, n - 1] += mp.sin(th) ** 2
        return out

    return g


def scalar_curvature(metric, p, h):
    """Scalar curvature by central differences with per-axis steps h."""
    n = len(p)
    p = [mp.mpf(v) for v in p]
    h = [mp.mpf(v) for v in h]

    def at(offsets):
        q = list(p)
        for axis, sgn in offsets:
            q[axis] += sgn * h[axis]
        return metric(q)

    g0 = at(())
    plus = [at(((a, 1),)) for a in range(n)]
    minus = [at(((a, -1),)) for a in range(n)]
    dg = [[[(plus[a][i, j] - minus[a][i, j]) / (2 * h[a]) for j in range(n)]
           for i in range(n)] for a in range(n)]
    ddg = [[None] * n for _ in range(n)]
    for a in range(n):
        ddg[a][a] = [[(plus[a][i, j] - 2 * g0[i, j] + minus[a][i, j]) / h[a] ** 2
                      for j in range(n)] for i in range(n)]
        for b in range(a + 1, n):
            pp, pm = at(((a, 1), (b, 1))), at(((a, 1), (b, -1)))
            mp_, mm = at(((a, -1), (b, 1))), at(((a, -1), (b, -1)))
            mixed = [[(pp[i, j] - pm[i, j] - mp_[i, j] + mm[i, j]) / (4 * h[a] * h[b])
                      for j in range(n)] for i in range(n)]
            ddg[a][b] = ddg[b][a] = mixed
    return curvature_from_jets(g0, dg, ddg)


def curvature_from_jets(g, dg, ddg):
    """Scalar curvature from g, dg[k][i][j] = d_k g_ij, ddg[k][l][i][j]."""
    n = g.rows
    gi = mp.inverse(g)
    R = range(n)
    low = [[[(dg[i][j][l] + dg[j][i][l] - dg[l][i][j]) / 2 for j in R] for i in R] for l in R]
    gam = [[[mp.fsum(gi[a, l] * low[l][i][j] for l in R) for j in R] for i in R] for a in R]
    dgi = [[[-mp.fsum(gi[a, c] * dg[p][c][d] * gi[d, b] for c in R for d in R)
             for b in R] for a in R] for p in R]
    dlow = [[[[(ddg[p][i][j][l] + ddg[p][j][i][l] - ddg[p][l][i][j]) / 2 for j in R]
              for i in R] for l in R] for p in R]
    dgam = [[[[mp.fsum(dgi[p][a][l] * low[l][i][j] + gi[a, l] * dlow[p][l][i][j] for l in R)
               for j in R] for i in R] for a in R] for p in R]
    total = mp.mpf(0)
    for i in R:
        for j in R:
            ric = mp.fsum(dgam[a][a][i][j] - dgam[i][a][a][j] for a in R)
            ric += mp.fsum(gam[a][a][l] * gam[l][i][j] - gam[a][i][l] * gam[l][a][j]
                           for a in R for l in R)
            total += gi[i, j] * ric
    return total


def _budget(magnitude, tol):
    """Step exponent and working digits for absolute error ~tol at this size."""
    need = log10(max(magnitude, 1.0)) - log10(tol) + 2  # digits of relative accuracy
    step_exp = need / 2 + 1
    dps = int(ceil(need + 2 * step_exp + 10))
    return 10.0 ** (-step_exp), dps


def induced_curvature_samples(curve: BendingCurve, model: ModelManifold, per_stage=2,
                              kinds=("arc", "straight", "horizontal"), seed=0, tol=1e-4,
                              kappa_coeff=2.0):
    """High-precision curvature of M^gamma at stage-interior samples.

    Returns a dict of float arrays: stage, r, theta, kappa, scalar, formula
    (O1 = 0, ambient curvature added where the model has a constant value)
    and residual = scalar - formula, the last computed in full precision.
    """
    rng = np.random.default_rng(seed)
    n, q = model.n, model.q
    out = {key: [] for key in ("stage", "r", "theta", "kappa", "scalar", "formula", "residual")}
    amb_const = model.s_g_exact if model.s_g_exact is not None else 0.0
    for j, st in enumerate(curve.stages):
        if st.kind not in kinds or st.length <= 0:
            continue
        for frac in np.linspace(0.3, 0.7, per_stage):
            ds = float(st.length * frac)
            x = [float(rng.uniform(a, b)) for a, b in model.w_box]
            u = [float(v) for v in rng.uniform(-0.8, 0.8, q - 1)]
            r_d = st.r_start - np.cos(st.theta_start) * ds
            r_d = max(r_d, st.r_end, 1e-300)
            size = ((q - 1) * (q - 2) + 1) / r_d ** 2 + abs(st.kappa) / r_d + abs(amb_const) + 1
            h, dps = _budget(size, tol)
            with mp.workdps(dps):
                metric = induced_metric(curve, model, j)
                scale_s = min(st.length, r_d, 1 / abs(st.kappa) if st.kappa else st.length)
                steps = [h] * (n - 1) + [h * scale_s]
                s = scalar_curvature(metric, x + u + [ds], steps)
                r, th = stage_point(st, mp.mpf(ds))
                sn = mp.sin(th)
                form = (amb_const + (q - 1) * (q - 2) * sn ** 2 / r ** 2
                        - kappa_coeff * (q - 1) * mp.mpf(st.kappa) * sn / r)
                for key, v in (("stage", j), ("r", r), ("theta", th), ("kappa", st.kappa),
                               ("scalar", s), ("formula", form), ("residual", s - form)):
                    out[key].append(float(v))
    return {key: np.array(v) for key, v in out.items()}


__all__ = ["induced_curvature_samples", "induced_metric", "scalar_curvature",
           "curvature_from_jets", "tube_metric", "stereo", "stage_point"]
