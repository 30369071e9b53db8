"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--points 20000]

Each kernel is warmed up once (so JIT compilation is excluded), checked for
agreement between the two paths, then timed; the best of ``--repeat`` runs
is reported.
"""
import argparse
import timeit

import numpy as np

from yamabe_surgery import _kernels
from yamabe_surgery.bending import BendingParams, construct_gamma
from yamabe_surgery.curvature import metric_jets
from yamabe_surgery.models import sphere_point_model


def cases(points, seed=0):
    rng = np.random.default_rng(seed)
    model = sphere_point_model(4, 0.5)
    pts = rng.uniform(-0.3, 0.3, (points, 4))
    g, dg, ddg = metric_jets(model.tube_chart, pts, 1e-3)
    curve = construct_gamma(BendingParams(r1=0.05, eps0=0.3, A=2.0, n=5, k=1))
    s = np.linspace(0.0, curve.length, 10 * points)
    return {
        "curvature_from_jets": lambda nb: _kernels.curvature_from_jets(g, dg, ddg, use_numba=nb),
        "sqrt_det": lambda nb: _kernels.sqrt_det(g, use_numba=nb),
        "eval_curve": lambda nb: _kernels.eval_curve(s, *curve._arrays, use_numba=nb),
    }


def agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=20_000)
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        print("numba not installed: only the numpy path is available")
        return 1
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}  agree")
    for name, fn in cases(args.points).items():
        ok = agree(fn(True), fn(False))
        t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat))
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x  {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
