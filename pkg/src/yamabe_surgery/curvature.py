"""Finite-difference curvature and grid quadrature for chart metrics.

Everything here is deliberately plain: central differences at a fixed,
caller-supplied step and midpoint quadrature on a uniform grid.  These
routines are the reference against which the closed-form curvature and
volume statements elsewhere in the package are checked.
"""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels


class DomainError(ValueError):
    """Raised for points outside a chart, or a metric that is not SPD."""


@dataclass(frozen=True)
class MetricField:
    """A metric on an axis-aligned chart box.

    ``func`` maps points of shape (..., dim) to matrices (..., dim, dim).
    Bounds may be infinite (periodic or unbounded coordinates).
    """

    dim: int
    lo: tuple
    hi: tuple
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "metric"

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return self.func(pts)

    def contains(self, pts, margin=0.0):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        margin = np.broadcast_to(np.asarray(margin, dtype=float), (self.dim,))
        lo = np.asarray(self.lo, dtype=float) + margin
        hi = np.asarray(self.hi, dtype=float) - margin
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def check_spd(self, pts):
        """Cholesky check at sampled points; raises DomainError on failure."""
        g = self(np.atleast_2d(pts))
        dets = _kernels.sqrt_det(g.reshape(-1, self.dim, self.dim))
        if np.any(~np.isfinite(dets)):
            bad = np.atleast_2d(pts)[~np.isfinite(dets)][0]
            raise DomainError(f"{self.name}: metric not positive-definite at {bad}")
        asym = np.max(np.abs(g - np.swapaxes(g, -1, -2))) if g.size else 0.0
        if asym > 1e-12:
            raise DomainError(f"{self.name}: metric not symmetric ({asym:.3e})")


@dataclass(frozen=True)
class CurvatureReport:
    point: np.ndarray
    scalar: float
    step: float


def _steps(step, dim):
    h = np.broadcast_to(np.asarray(step, dtype=float), (dim,)).copy()
    if np.any(h <= 0):
        raise ValueError("finite-difference step must be positive")
    return h


def _check_margin(metric, pts, h, factor):
    inside = metric.contains(pts, margin=factor * h)
    if not np.all(inside):
        bad = np.atleast_2d(pts)[~inside][0]
        raise DomainError(
            f"point {bad} is closer than {factor} steps to the boundary of {metric.name}")


def metric_jets(metric: MetricField, pts, step):
    """Metric value, first and second derivatives by central differences.

    Returns g[m,i,j], dg[m,k,i,j], ddg[m,k,l,i,j] for pts of shape (m, n).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    m, n = pts.shape
    h = _steps(step, n)
    offsets = [np.zeros(n)]
    for k in range(n):
        for sgn in (1.0, -1.0):
            e = np.zeros(n)
            e[k] = sgn * h[k]
            offsets.append(e)
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    for k, l in pairs:
        for sk in (1.0, -1.0):
            for sl in (1.0, -1.0):
                e = np.zeros(n)
                e[k] = sk * h[k]
                e[l] = sl * h[l]
                offsets.append(e)
    offsets = np.array(offsets)
    stencil = pts[:, None, :] + offsets[None, :, :]
    vals = metric(stencil.reshape(-1, n)).reshape(m, len(offsets), n, n)
    g0 = vals[:, 0]
    dg = np.empty((m, n, n, n))
    ddg = np.empty((m, n, n, n, n))
    for k in range(n):
        gp, gm = vals[:, 1 + 2 * k], vals[:, 2 + 2 * k]
        dg[:, k] = (gp - gm) / (2.0 * h[k])
        ddg[:, k, k] = (gp - 2.0 * g0 + gm) / (h[k] * h[k])
    base = 1 + 2 * n
    for idx, (k, l) in enumerate(pairs):
        pp, pm, mp, mm = (vals[:, base + 4 * idx + j] for j in range(4))
        mixed = (pp - pm - mp + mm) / (4.0 * h[k] * h[l])
        ddg[:, k, l] = mixed
        ddg[:, l, k] = mixed
    return g0, dg, ddg


def _curvature(metric, pts, step, factor):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    h = _steps(step, pts.shape[1])
    _check_margin(metric, pts, h, factor)
    g, dg, ddg = metric_jets(metric, pts, h)
    gamma, scalar, ok = _kernels.curvature_from_jets(g, dg, ddg)
    if not np.all(ok):
        bad = pts[~ok][0]
        raise DomainError(f"{metric.name}: metric matrix not invertible (Cholesky failed) at {bad}")
    if not np.all(np.isfinite(scalar)):
        raise DomainError(f"{metric.name}: non-finite curvature")
    return gamma, scalar


def christoffel(metric: MetricField, p, step=1e-3):
    """Gamma^k_ij at one point (shape (n,n,n)) or a batch (m,n,n,n)."""
    p = np.asarray(p, dtype=float)
    gamma, _ = _curvature(metric, p, step, 2.0)
    return gamma[0] if p.ndim == 1 else gamma


def scalar_curvature(metric: MetricField, p, step=1e-3):
    """Scalar curvature at a point (float) or batch of points (array)."""
    p = np.asarray(p, dtype=float)
    _, scalar = _curvature(metric, p, step, 4.0)
    return float(scalar[0]) if p.ndim == 1 else scalar


def scalar_curvature_extrapolated(metric: MetricField, p, step=1e-3):
    """Scalar curvature with one Richardson step: (4 S(h/2) - S(h)) / 3.

    Central-difference errors are even in h, so this cancels the h^2 term.
    Useful when the answer is a small difference of large curvatures.
    """
    value, _ = scalar_curvature_with_error(metric, p, step)
    return value


def scalar_curvature_with_error(metric: MetricField, p, step=1e-3):
    """Extrapolated scalar curvature and |S(h/2) - S(h)| as an error scale."""
    p = np.asarray(p, dtype=float)
    h = _steps(step, p.shape[-1])
    _, coarse = _curvature(metric, p, h, 4.0)
    _, fine = _curvature(metric, p, 0.5 * h, 4.0)
    scalar = (4.0 * fine - coarse) / 3.0
    err = np.abs(fine - coarse)
    if p.ndim == 1:
        return float(scalar[0]), float(err[0])
    return scalar, err


def curvature_report(metric, p, step=1e-3):
    return CurvatureReport(np.asarray(p, dtype=float), scalar_curvature(metric, p, step), float(step))


def product_metric(g1: MetricField, g2: MetricField, name=None) -> MetricField:
    """Block-diagonal g1 + g2 on the product chart."""
    n1, n = g1.dim, g1.dim + g2.dim

    def func(pts):
        a = g1(pts[..., :n1])
        b = g2(pts[..., n1:])
        out = np.zeros(pts.shape[:-1] + (n, n))
        out[..., :n1, :n1] = a
        out[..., n1:, n1:] = b
        return out

    return MetricField(n, tuple(g1.lo) + tuple(g2.lo), tuple(g1.hi) + tuple(g2.hi),
                       func, name or f"{g1.name}+{g2.name}")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    error: float
    cells: tuple


def _midpoint_volume(metric, box, cells, chunk=200_000):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    dim = box.shape[0]
    if dim != metric.dim:
        raise ValueError("box dimension does not match metric")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("empty integration box")
    cells = np.broadcast_to(np.asarray(cells, dtype=int), (dim,))
    if np.any(cells < 1):
        raise ValueError("need at least one cell per axis")
    widths = (box[:, 1] - box[:, 0]) / cells
    axes = [box[i, 0] + (np.arange(cells[i]) + 0.5) * widths[i] for i in range(dim)]
    cell_vol = float(np.prod(widths))
    total = 0.0
    count = int(np.prod(cells))
    shape = tuple(int(c) for c in cells)
    for start in range(0, count, chunk):
        flat = np.arange(start, min(start + chunk, count))
        idx = np.unravel_index(flat, shape)
        pts = np.stack([axes[i][idx[i]] for i in range(dim)], axis=-1)
        dens = _kernels.sqrt_det(metric(pts))
        if np.any(~np.isfinite(dens)):
            bad = pts[~np.isfinite(dens)][0]
            raise DomainError(f"{metric.name}: non-positive-definite sample at {bad}")
        total += float(np.sum(dens))
    return total * cell_vol


def volume_estimate(metric: MetricField, box, cells_per_axis) -> VolumeEstimate:
    """Midpoint-rule volume plus the change from the next coarser grid."""
    cells = np.broadcast_to(np.asarray(cells_per_axis, dtype=int), (metric.dim,))
    if np.any(cells < 2):
        raise ValueError("cells_per_axis must be >= 2")
    fine = _midpoint_volume(metric, box, cells)
    coarse = _midpoint_volume(metric, box, np.maximum(cells // 2, 1))
    return VolumeEstimate(fine, abs(fine - coarse), tuple(int(c) for c in cells))


def volume(metric: MetricField, box, cells_per_axis) -> float:
    cells = np.broadcast_to(np.asarray(cells_per_axis, dtype=int), (metric.dim,))
    if np.any(cells < 2):
        raise ValueError("cells_per_axis must be >= 2")
    return _midpoint_volume(metric, box, cells)


def sample_box(rng, box: Sequence, count: int, margin=0.0):
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    lo = box[:, 0] + margin
    hi = box[:, 1] - margin
    return lo + (hi - lo) * rng.random((count, box.shape[0]))
