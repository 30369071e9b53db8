"""Sphere parametrizations with analytic Jacobians, and metric pullback."""
import numpy as np


def stereo(u, patch=1):
    """Inverse stereographic map R^m -> S^m in R^(m+1).

    ``patch=1`` projects from the north pole (last coordinate +1), so
    u = 0 maps to the south pole; ``patch=-1`` mirrors the last axis.
    Returns (sigma, jac) with jac[..., a, j] = d sigma_a / d u_j.
    """
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    q = np.sum(u * u, axis=-1)[..., None]
    den = 1.0 + q
    sigma = np.concatenate([2.0 * u / den, (q - 1.0) / den], axis=-1)
    jac = np.zeros(u.shape[:-1] + (m + 1, m))
    eye = np.eye(m)
    jac[..., :m, :] = 2.0 * eye / den[..., None] - 4.0 * u[..., :, None] * u[..., None, :] / (den[..., None] ** 2)
    jac[..., m, :] = 4.0 * u / den ** 2
    if patch == -1:
        sigma[..., m] *= -1.0
        jac[..., m, :] *= -1.0
    elif patch != 1:
        raise ValueError("patch must be +1 or -1")
    return sigma, jac


def stereo_conformal(u):
    """Conformal factor of the round unit metric in a stereographic chart."""
    q = np.sum(np.asarray(u, dtype=float) ** 2, axis=-1)
    return 4.0 / (1.0 + q) ** 2


def hyperspherical(phi):
    """Angles (phi_0..phi_{m-1}) -> S^m in R^(m+1), with Jacobian.

    phi_0..phi_{m-2} range over [0, pi], phi_{m-1} over [0, 2 pi].
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.shape[-1]
    s = np.sin(phi)
    c = np.cos(phi)
    x = np.empty(phi.shape[:-1] + (m + 1,))
    jac = np.zeros(phi.shape[:-1] + (m + 1, m))
    for a in range(m + 1):
        prod = np.ones(phi.shape[:-1])
        for i in range(min(a, m)):
            prod = prod * s[..., i]
        last = c[..., a] if a < m else 1.0
        x[..., a] = prod * last
        for j in range(min(a, m)):
            d = np.ones(phi.shape[:-1])
            for i in range(min(a, m)):
                d = d * (c[..., i] if i == j else s[..., i])
            jac[..., a, j] = d * last
        if a < m:
            jac[..., a, a] = -prod * s[..., a]
    return x, jac


def angle_box(m):
    return [(0.0, np.pi)] * (m - 1) + [(0.0, 2.0 * np.pi)]


def unit_sphere_area(m):
    """Area of the unit S^m."""
    from math import gamma, pi
    return 2.0 * pi ** ((m + 1) / 2.0) / gamma((m + 1) / 2.0)


def pullback(g, jac):
    """J^T g J for batched g (..., N, N) and J (..., N, d)."""
    return np.einsum("...ai,...ab,...bj->...ij", jac, g, jac)


def block_diag(a, b):
    n1, n2 = a.shape[-1], b.shape[-1]
    shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    out = np.zeros(shape + (n1 + n2, n1 + n2))
    out[..., :n1, :n1] = a
    out[..., n1:, n1:] = b
    return out
