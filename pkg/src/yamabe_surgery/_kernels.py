"""Hot numeric kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy twin.
The numba path is used when numba imports cleanly and the environment
variable ``YAMABE_SURGERY_NUMBA`` is not set to ``0``.  Both paths take
and return the same arrays, so tests can run them side by side.
"""
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("YAMABE_SURGERY_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _np_inverse_spd(g):
    """Batched inverse via Cholesky; returns (ginv, ok)."""
    m, n, _ = g.shape
    ginv = np.full_like(g, np.nan)
    ok = np.zeros(m, dtype=np.bool_)
    eye = np.eye(n)
    for idx in range(m):
        try:
            c = np.linalg.cholesky(g[idx])
        except np.linalg.LinAlgError:
            continue
        y = np.linalg.solve(c, eye)
        ginv[idx] = y.T @ y
        ok[idx] = True
    return ginv, ok


def np_curvature_from_jets(g, dg, ddg):
    """Christoffel symbols and scalar curvature from metric jets.

    g[m,i,j], dg[m,k,i,j] = d_k g_ij, ddg[m,k,l,i,j] = d_k d_l g_ij.
    Returns gamma[m,k,i,j] = Gamma^k_ij, scalar[m], ok[m].
    """
    ginv, ok = _np_inverse_spd(g)
    # lowered symbols: low[l,i,j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    low = 0.5 * (np.einsum("mijl->mlij", dg) + np.einsum("mjil->mlij", dg)
                 - dg)
    gamma = np.einsum("mkl,mlij->mkij", ginv, low)
    # d_p low[l,i,j]
    dlow = 0.5 * (np.einsum("mpijl->mplij", ddg) + np.einsum("mpjil->mplij", ddg)
                  - ddg)
    dginv = -np.einsum("mka,mpab,mbl->mpkl", ginv, dg, ginv)
    dgamma = (np.einsum("mpkl,mlij->mpkij", dginv, low)
              + np.einsum("mkl,mplij->mpkij", ginv, dlow))
    # Ricci: d_k G^k_ij - d_i G^k_kj + G^k_kl G^l_ij - G^k_il G^l_kj
    ricci = (np.einsum("mkkij->mij", dgamma)
             - np.einsum("mikkj->mij", dgamma)
             + np.einsum("mkkl,mlij->mij", gamma, gamma)
             - np.einsum("mkil,mlkj->mij", gamma, gamma))
    scalar = np.einsum("mij,mij->m", ginv, ricci)
    return gamma, scalar, ok


def np_sqrt_det(g):
    """sqrt(det g) per sample via Cholesky; NaN where g is not SPD."""
    out = np.full(g.shape[0], np.nan)
    for idx in range(g.shape[0]):
        try:
            c = np.linalg.cholesky(g[idx])
        except np.linalg.LinAlgError:
            continue
        out[idx] = np.prod(np.diag(c))
    return out


def np_eval_curve(s, starts, theta0, kappa, t0, r0):
    """Evaluate a piecewise constant-curvature planar curve at arclengths s.

    Stage j starts at arclength starts[j] with angle theta0[j], position
    (t0[j], r0[j]) and constant curvature kappa[j].  Tangent is
    (sin theta, -cos theta) in (t, r).
    """
    idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(starts) - 1)
    ds = s - starts[idx]
    k = kappa[idx]
    half = 0.5 * k * ds
    # sin(k ds / 2) / k, continuous at k = 0
    chord = np.where(k != 0.0, np.sin(half) / np.where(k != 0.0, k, 1.0), 0.5 * ds)
    mid = theta0[idx] + half
    t = t0[idx] + 2.0 * np.sin(mid) * chord
    r = r0[idx] - 2.0 * np.cos(mid) * chord
    theta = theta0[idx] + k * ds
    return t, r, theta, k, idx


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _nb_cholesky(a, c):
        n = a.shape[0]
        for i in range(n):
            for j in range(n):
                c[i, j] = 0.0
        for j in range(n):
            d = a[j, j]
            for p in range(j):
                d -= c[j, p] * c[j, p]
            if not d > 0.0:
                return False
            c[j, j] = np.sqrt(d)
            for i in range(j + 1, n):
                v = a[i, j]
                for p in range(j):
                    v -= c[i, p] * c[j, p]
                c[i, j] = v / c[j, j]
        return True

    @numba.njit(cache=True)
    def _nb_inverse_from_cholesky(c, inv):
        n = c.shape[0]
        # invert lower-triangular c into w, then inv = w^T w
        w = np.zeros((n, n))
        for j in range(n):
            w[j, j] = 1.0 / c[j, j]
            for i in range(j + 1, n):
                v = 0.0
                for p in range(j, i):
                    v -= c[i, p] * w[p, j]
                w[i, j] = v / c[i, i]
        for i in range(n):
            for j in range(n):
                v = 0.0
                for p in range(n):
                    v += w[p, i] * w[p, j]
                inv[i, j] = v

    @numba.njit(cache=True)
    def nb_curvature_from_jets(g, dg, ddg):
        m, n, _ = g.shape
        gamma = np.full((m, n, n, n), np.nan)
        scalar = np.full(m, np.nan)
        ok = np.zeros(m, dtype=np.bool_)
        c = np.zeros((n, n))
        ginv = np.zeros((n, n))
        low = np.zeros((n, n, n))
        dlow = np.zeros((n, n, n, n))
        dginv = np.zeros((n, n, n))
        dgam = np.zeros((n, n, n, n))
        gam = np.zeros((n, n, n))
        for s in range(m):
            if not _nb_cholesky(g[s], c):
                continue
            ok[s] = True
            _nb_inverse_from_cholesky(c, ginv)
            for l in range(n):
                for i in range(n):
                    for j in range(n):
                        low[l, i, j] = 0.5 * (dg[s, i, j, l] + dg[s, j, i, l]
                                              - dg[s, l, i, j])
                        for p in range(n):
                            dlow[p, l, i, j] = 0.5 * (ddg[s, p, i, j, l]
                                                      + ddg[s, p, j, i, l]
                                                      - ddg[s, p, l, i, j])
            for k in range(n):
                for i in range(n):
                    for j in range(n):
                        v = 0.0
                        for l in range(n):
                            v += ginv[k, l] * low[l, i, j]
                        gam[k, i, j] = v
                        gamma[s, k, i, j] = v
            for p in range(n):
                for k in range(n):
                    for l in range(n):
                        v = 0.0
                        for a in range(n):
                            for b in range(n):
                                v -= ginv[k, a] * dg[s, p, a, b] * ginv[b, l]
                        dginv[p, k, l] = v
            for p in range(n):
                for k in range(n):
                    for i in range(n):
                        for j in range(n):
                            v = 0.0
                            for l in range(n):
                                v += dginv[p, k, l] * low[l, i, j]
                                v += ginv[k, l] * dlow[p, l, i, j]
                            dgam[p, k, i, j] = v
            total = 0.0
            for i in range(n):
                for j in range(n):
                    ric = 0.0
                    for k in range(n):
                        ric += dgam[k, k, i, j] - dgam[i, k, k, j]
                        for l in range(n):
                            ric += gam[k, k, l] * gam[l, i, j]
                            ric -= gam[k, i, l] * gam[l, k, j]
                    total += ginv[i, j] * ric
            scalar[s] = total
        return gamma, scalar, ok

    @numba.njit(cache=True)
    def nb_sqrt_det(g):
        m, n, _ = g.shape
        out = np.full(m, np.nan)
        c = np.zeros((n, n))
        for s in range(m):
            if _nb_cholesky(g[s], c):
                v = 1.0
                for i in range(n):
                    v *= c[i, i]
                out[s] = v
        return out

    @numba.njit(cache=True)
    def nb_eval_curve(s, starts, theta0, kappa, t0, r0):
        m = s.shape[0]
        ns = starts.shape[0]
        t = np.empty(m)
        r = np.empty(m)
        theta = np.empty(m)
        kk = np.empty(m)
        idx = np.empty(m, dtype=np.int64)
        for q in range(m):
            j = np.searchsorted(starts, s[q], side="right") - 1
            if j < 0:
                j = 0
            if j > ns - 1:
                j = ns - 1
            ds = s[q] - starts[j]
            k = kappa[j]
            half = 0.5 * k * ds
            if k != 0.0:
                chord = np.sin(half) / k
            else:
                chord = 0.5 * ds
            mid = theta0[j] + half
            t[q] = t0[j] + 2.0 * np.sin(mid) * chord
            r[q] = r0[j] - 2.0 * np.cos(mid) * chord
            theta[q] = theta0[j] + k * ds
            kk[q] = k
            idx[q] = j
        return t, r, theta, kk, idx


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def curvature_from_jets(g, dg, ddg, use_numba=None):
    use = USE_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (g, dg, ddg)]
    if use:
        return nb_curvature_from_jets(*args)
    return np_curvature_from_jets(*args)


def sqrt_det(g, use_numba=None):
    use = USE_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if use:
        return nb_sqrt_det(g)
    return np_sqrt_det(g)


def eval_curve(s, starts, theta0, kappa, t0, r0, use_numba=None):
    use = USE_NUMBA if use_numba is None else (use_numba and HAS_NUMBA)
    arrs = [np.ascontiguousarray(a, dtype=np.float64)
            for a in (s, starts, theta0, kappa, t0, r0)]
    if use:
        return nb_eval_curve(*arrs)
    return np_eval_curve(*arrs)
