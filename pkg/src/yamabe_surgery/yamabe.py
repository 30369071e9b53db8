"""Gluing bounds for Yamabe invariants and the volume split behind them.

For nonpositive invariants the bound is a p-norm with p = n/2:

    Y(M1 # M2) >= -[(-Y1)^{n/2} + (-Y2)^{n/2}]^{2/n},

and when exactly one side is positive the bound is the nonpositive one.
"""
from dataclasses import dataclass
from typing import Mapping

import numpy as np


class UnsupportedCaseError(ValueError):
    """Both invariants positive: no gluing bound is available."""


class DegenerateSplitError(ValueError):
    """A zero constant: the optimal split is a limit, carried in ``limit``."""

    def __init__(self, message, limit=None):
        super().__init__(message)
        self.limit = limit


@dataclass(frozen=True)
class YamabeValue:
    value: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.n}")


@dataclass(frozen=True)
class VolumeSplit:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if not (0.0 <= self.lambda1 <= 1.0 and 0.0 <= self.lambda2 <= 1.0):
            raise ValueError("split fractions must lie in [0, 1]")
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-12:
            raise ValueError("split fractions must sum to 1")

    def to_dict(self):
        return {"lambda1": self.lambda1, "lambda2": self.lambda2}


@dataclass(frozen=True)
class GlueResult:
    bound: float
    case: str
    split: VolumeSplit | None

    def to_dict(self):
        return {"bound": self.bound, "case": self.case,
                "split": None if self.split is None else self.split.to_dict()}


def _check_n(n):
    if int(n) != n or n < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {n}")


def glue_value(y1: float, y2: float, n: int) -> float:
    """Plain-number form of the gluing bound."""
    _check_n(n)
    if y1 > 0 and y2 > 0:
        raise UnsupportedCaseError("both invariants positive: no gluing bound")
    if y1 <= 0 and y2 <= 0:
        p = n / 2.0
        return -(((-y1) ** p + (-y2) ** p) ** (1.0 / p)) + 0.0
    return min(y1, y2)


def glue_bound(Y1: YamabeValue, Y2: YamabeValue) -> float:
    if Y1.n != Y2.n:
        raise ValueError(f"dimension mismatch: {Y1.n} vs {Y2.n}")
    return glue_value(Y1.value, Y2.value, Y1.n)


def glue(y1: float, y2: float, n: int) -> GlueResult:
    """Bound, which case applied, and the volume split when it is defined."""
    bound = glue_value(y1, y2, n)
    if y1 <= 0 and y2 <= 0:
        try:
            split = optimal_split(y1, y2, n)
        except DegenerateSplitError as exc:
            split = exc.limit
        return GlueResult(bound, "nonpositive", split)
    return GlueResult(bound, "mixed_sign", None)


def optimal_split(a1: float, a2: float, n: int) -> VolumeSplit:
    """lambda_i = |a_i|^{n/2} / (|a_1|^{n/2} + |a_2|^{n/2}) for a_1, a_2 < 0.

    This equalizes a_1/lambda_1^{2/n} and a_2/lambda_2^{2/n}, which is where
    the smaller of the two is largest.
    """
    _check_n(n)
    if a1 > 0 or a2 > 0:
        raise ValueError("optimal split needs nonpositive constants")
    if a1 == 0 or a2 == 0:
        if a1 == 0 and a2 == 0:
            limit = VolumeSplit(0.5, 0.5)
        else:
            limit = VolumeSplit(0.0, 1.0) if a1 == 0 else VolumeSplit(1.0, 0.0)
        raise DegenerateSplitError("zero constant: split is a limit", limit)
    p = n / 2.0
    w1, w2 = (-a1) ** p, (-a2) ** p
    # both fractions directly: 1 - l1 would lose the digits of a tiny l2
    return VolumeSplit(w1 / (w1 + w2), w2 / (w1 + w2))


def split_objective(a1, a2, n, lam):
    """min(a1/lam^{2/n}, a2/(1-lam)^{2/n}); vectorized over lam in (0, 1)."""
    lam = np.asarray(lam, dtype=float)
    e = 2.0 / n
    return np.minimum(a1 / lam ** e, a2 / (1.0 - lam) ** e)


def kobayashi_lower_bound(min_s: float, vol: float, n: int) -> float:
    """min(s_g) Vol_g^{2/n}: lower bound for a nonpositive conformal constant."""
    _check_n(n)
    if not vol > 0:
        raise ValueError("volume must be positive")
    return float(min_s) * float(vol) ** (2.0 / n)


# ---------------------------------------------------------------------------
# certificate from two surgery reports
# ---------------------------------------------------------------------------

REQUIRED_KEYS = ("n", "eps0", "s_g_min", "volume_g", "s_min_measured",
                 "volume_measured", "end_form_residual", "end")


class EndMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GluingCertificate:
    certificate: float
    target: float
    glue_bound: float
    split: VolumeSplit
    scales: tuple
    min_scalar: float
    volume: float
    eps_curvature: float
    eps_volume: float

    @property
    def passed(self):
        return self.certificate >= self.target - 1e-12 * (1.0 + abs(self.target))

    def to_dict(self):
        return {"certificate": self.certificate, "target": self.target,
                "glue_bound": self.glue_bound, "split": self.split.to_dict(),
                "scales": list(self.scales), "min_scalar": self.min_scalar,
                "volume": self.volume, "eps_curvature": self.eps_curvature,
                "eps_volume": self.eps_volume, "passed": self.passed}


def _fields(report):
    d = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    missing = [k for k in REQUIRED_KEYS if k not in d]
    if missing:
        raise KeyError(f"report lacks {missing}")
    return d


def theorem1_certificate(report1: Mapping, report2: Mapping, tol=1e-3) -> GluingCertificate:
    """Lower bound for the glued manifold from two measured constructions.

    Each model metric g_i has constant a_i = min(s_{g_i}) Vol(g_i)^{2/n}.
    Metric i is scaled to volume lambda_i of the optimal split; scalar
    curvature and volume follow the exact scaling laws.  The measured
    minimum curvature and volume of the glued pair then give a
    Kobayashi-type bound, compared against

        (G - eps_s) (1 + eps_v)^{2/n},

    with G the gluing bound and eps_s, eps_v the scaled slack budgets.
    """
    d1, d2 = _fields(report1), _fields(report2)
    n = int(d1["n"])
    if int(d2["n"]) != n:
        raise ValueError("reports have different dimensions")
    if d1["end"] != d2["end"]:
        raise EndMismatchError(f"ends differ: {d1['end']} vs {d2['end']}")
    for d in (d1, d2):
        if d["end_form_residual"] > tol:
            raise EndMismatchError(f"end residual {d['end_form_residual']:.3e} above {tol:g}")
    a = [kobayashi_lower_bound(d["s_g_min"], d["volume_g"], n) for d in (d1, d2)]
    if a[0] > 0 or a[1] > 0:
        raise UnsupportedCaseError("certificate needs nonpositive model constants")
    try:
        split = optimal_split(a[0], a[1], n)
    except DegenerateSplitError as exc:
        if exc.limit.lambda1 != 0.5:
            raise
        split = exc.limit
    lams = (split.lambda1, split.lambda2)
    # metric g -> c^2 g with c^n Vol_g = lambda
    c2 = [(lam / d["volume_g"]) ** (2.0 / n) for lam, d in zip(lams, (d1, d2))]
    min_s = min(d["s_min_measured"] / c for d, c in zip((d1, d2), c2))
    vol = sum(c ** (n / 2.0) * d["volume_measured"] for d, c in zip((d1, d2), c2))
    eps_s = max(d["eps0"] / c for d, c in zip((d1, d2), c2))
    eps_v = sum(c ** (n / 2.0) * d["eps0"] for d, c in zip((d1, d2), c2))
    g = glue_value(a[0], a[1], n)
    cert = kobayashi_lower_bound(min_s, vol, n)
    target = (g - eps_s) * (1.0 + eps_v) ** (2.0 / n)
    return GluingCertificate(cert, target, g, split, tuple(float(np.sqrt(c)) for c in c2),
                               float(min_s), float(vol), float(eps_s), float(eps_v))
