from math import sqrt

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from yamabe_surgery.bending import CertificateError
from yamabe_surgery.curvature import MetricField, scalar_curvature
from yamabe_surgery.homotopy import (NotPositiveScalarError, b_from_derivatives,
                                     b_term, choose_stretch, end_grid, grid_points,
                                     h1_homotopy, h2_homotopy, homotopy_stats,
                                     homotopy_volume_bound, linear_homotopy,
                                     product_chart_metric, reparametrize, stretched_metric,
                                     stretched_scalar_formula, t_grid, verify_positive_scalar)
from yamabe_surgery.models import (end_box, flat_torus_model, perturbed_tube_model,
                                   sphere_point_model)

from _support import flat_metric, sphere_metric, sympy_scalar


def conformal_family(m, c, radius=1.0):
    """g^t = (1 + c t) * round S^m(radius), as a linear homotopy."""
    g0 = sphere_metric(m, radius)
    g1 = MetricField(m, g0.lo, g0.hi, lambda p: (1.0 + c) * g0(p), "scaled")
    return linear_homotopy(g0, g1, f"conformal(c={c:g})")


def test_b_for_a_conformal_family_matches_sympy():
    t, c, m = sp.symbols("t c m", positive=True)
    phi = 1 + c * t
    # A = phi'/phi I, g^-1 g'' = 0
    tr_a, tr_aa = m * sp.diff(phi, t) / phi, m * (sp.diff(phi, t) / phi) ** 2
    b = sp.Rational(1, 4) * (tr_aa - tr_a ** 2) - sp.Rational(1, 2) * (sp.diff(tr_a, t))
    assert sp.simplify(b - c ** 2 * m * (3 - m) / (4 * phi ** 2)) == 0
    for mm, cc, tt in [(2, 0.5, 0.3), (3, 1.0, 0.0), (4, 1.0, 0.7)]:
        H = conformal_family(mm, cc)
        x = np.full(mm, 0.2)
        assert b_term(H, x, tt) == pytest.approx(cc ** 2 * mm * (3 - mm) / (4 * (1 + cc * tt) ** 2),
                                                 rel=1e-12)


def test_stretched_formula_against_symbolic_curvature():
    """Full scalar curvature of g^t + a^2 dt^2, symbolically, for a non-conformal family."""
    x, y, t, a = sp.symbols("x y t a", real=True)
    gt = sp.Matrix([[1 + t * x ** 2 / 3, t * x * y / 5], [t * x * y / 5, sp.exp(t / 2) + y ** 2 / 4]])
    G = sp.zeros(3, 3)
    G[:2, :2] = gt
    G[2, 2] = a ** 2
    s_full = sp.lambdify((x, y, t, a), sympy_scalar(G, (x, y, t)))
    s_base = sp.lambdify((x, y, t), sympy_scalar(gt, (x, y)))
    f = sp.lambdify((x, y, t), gt)
    fd = sp.lambdify((x, y, t), sp.diff(gt, t))
    fdd = sp.lambdify((x, y, t), sp.diff(gt, t, 2))
    rng = np.random.default_rng(0)
    for _ in range(10):
        xv, yv, tv, av = rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0, 1), \
            rng.uniform(0.3, 2.0)
        b = b_from_derivatives(np.array(f(xv, yv, tv), float), np.array(fd(xv, yv, tv), float),
                               np.array(fdd(xv, yv, tv), float))
        assert s_base(xv, yv, tv) + b / av ** 2 == pytest.approx(s_full(xv, yv, tv, av),
                                                                  rel=1e-10, abs=1e-10)


def test_fd_product_metric_matches_formula():
    H = conformal_family(3, 1.0)
    a = 0.7
    G = product_chart_metric(H, a)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x, t = rng.uniform(-0.6, 0.6, 3), rng.uniform(0.1, 0.9)
        direct = scalar_curvature(G, np.append(x, t), 1e-3)
        formula = stretched_scalar_formula(H, x, t, a)[0]
        assert direct == pytest.approx(formula, rel=1e-3)


def test_stretched_and_product_charts_are_isometric():
    H = conformal_family(2, 0.5)
    a = 1.3
    sm = stretched_metric(H, a).field
    G = product_chart_metric(H, a)
    p = np.array([0.2, -0.1, 0.4])
    q = np.array([0.2, -0.1, 0.4 * a])
    assert scalar_curvature(sm, q, 1e-3) == pytest.approx(scalar_curvature(G, p, 1e-3), rel=1e-6)


def test_linear_homotopy_endpoints_and_derivatives():
    g0, g1 = sphere_metric(2, 1.0), sphere_metric(2, 0.5)
    H = linear_homotopy(g0, g1)
    p = np.array([[0.1, 0.2]])
    assert np.array_equal(H.field(p, 0.0), g0(p))
    assert np.array_equal(H.field(p, 1.0), g1(p))
    assert np.allclose(H.dt_field(p, 0.3), g1(p) - g0(p))
    assert np.all(H.dtt_field(p, 0.3) == 0)
    with pytest.raises(ValueError):
        linear_homotopy(g0, sphere_metric(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.5), st.floats(0.1, 2.0), st.floats(0.0, 1.0))
def test_reparametrization_scales_b_by_slope_squared(offset, slope, t):
    H = conformal_family(3, 1.0)
    slope = min(slope, (1.0 - offset))
    R = reparametrize(H, offset, slope)
    x = np.array([0.1, 0.3, -0.2])
    assert b_term(R, x, t) == pytest.approx(slope ** 2 * b_term(H, x, offset + slope * t),
                                            rel=1e-10, abs=1e-14)


def test_sphere_negative_control_needs_the_corrected_threshold():
    H = conformal_family(4, 1.0)
    pts = grid_points([(-1.0, 1.0)] * 4, 4)
    ts = t_grid(9)
    stats = homotopy_stats(H, pts, ts)
    assert stats.s_min == pytest.approx(6.0, rel=1e-3)
    assert stats.B_min == pytest.approx(-1.0, rel=1e-9)
    assert stats.B_max == pytest.approx(-0.25, rel=1e-9)
    assert stats.a_star == pytest.approx(sqrt(1 / 6), rel=1e-3)
    assert stats.a_star_literal == 0.0
    assert verify_positive_scalar(H, choose_stretch(stats), pts, ts).passed
    small = verify_positive_scalar(H, 0.5 * stats.a_star, pts, ts)
    assert not small.passed
    # the finite-difference curvature of G_a agrees that it goes negative
    w = small.worst
    assert w["t"] == 0.0
    direct = scalar_curvature(product_chart_metric(H, w["a"]), np.append(w["x"], 0.01), 1e-3)
    assert direct < 0


def test_flat_family_has_no_stretch_certificate():
    H = linear_homotopy(flat_metric(3), flat_metric(3))
    with pytest.raises(NotPositiveScalarError):
        homotopy_stats(H, grid_points([(-0.5, 0.5)] * 3, 3), t_grid(3))


def test_empty_grid_and_bad_stretch_are_rejected():
    H = conformal_family(2, 1.0)
    with pytest.raises(ValueError):
        homotopy_stats(H, np.empty((0, 2)), t_grid(3))
    with pytest.raises(ValueError):
        verify_positive_scalar(H, 0.0, np.zeros((1, 2)), t_grid(3))
    with pytest.raises(ValueError):
        stretched_metric(H, -1.0)


def test_choose_stretch_ignores_rounding_noise():
    H = conformal_family(3, 1.0)  # B = 0 identically for m = 3
    stats = homotopy_stats(H, grid_points([(-0.5, 0.5)] * 3, 3), t_grid(3))
    assert stats.a_star < 1e-6
    assert choose_stretch(stats) == 1.0


@pytest.mark.parametrize("delta", [0.1, 0.05])
def test_end_homotopies_on_the_sphere_model(delta):
    model = sphere_point_model(4, 0.5)
    pts = end_grid(model, 4)
    ts = t_grid(5)
    h = model.w_func
    for H in (h1_homotopy(model, delta), h2_homotopy(model, delta, h, delta / 2)):
        stats = homotopy_stats(H, pts, ts)
        assert stats.s_min * delta ** 2 > 5.0
        assert verify_positive_scalar(H, choose_stretch(stats), pts, ts).passed


def test_h2_radius_is_validated():
    model = flat_torus_model(4, 1, 0.2)
    with pytest.raises(ValueError):
        h2_homotopy(model, 0.1, model.w_func, radius=0.0)


@pytest.mark.parametrize("family", ["conformal", "H1", "H2"])
def test_product_volume_bound(family):
    if family == "conformal":
        H, box = conformal_family(2, 1.0), [(-1.0, 1.0)] * 2
    else:
        model = flat_torus_model(4, 1, 0.2)
        H = (h1_homotopy(model, 0.1, "hyper") if family == "H1"
             else h2_homotopy(model, 0.1, lambda x: 2.0 * model.w_func(x), 0.05, "hyper"))
        box = end_box(model, "hyper")
    vol = homotopy_volume_bound(H, 1.7, box, t_grid(5))
    assert vol.quadrature <= vol.sup_volume * 1.7 + 1e-3
    with pytest.raises(CertificateError):
        homotopy_volume_bound(H, 1.7, box, t_grid(5), tol=-0.5 * vol.quadrature)


def test_b_needs_an_invertible_metric():
    from yamabe_surgery.curvature import DomainError
    with pytest.raises(DomainError):
        b_from_derivatives(np.zeros((2, 2)), np.eye(2), np.eye(2))


def test_h1_on_perturbed_model_scales_like_inverse_delta_squared():
    model = perturbed_tube_model(4, 1, 0.2, 0.1)
    stats = homotopy_stats(h1_homotopy(model, 0.05), end_grid(model, 7), t_grid(9))
    # frozen regression value of s_min * delta^2 on the default 7 x 9 grid
    assert stats.s_min * 0.05 ** 2 == pytest.approx(1.99901, abs=1e-5)
    assert stats.a_star == 0.0 and str(stats.a_star) == "0.0"
