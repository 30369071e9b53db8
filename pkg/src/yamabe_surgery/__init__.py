"""Numerical checks for a curvature-controlled surgery construction.

Modules:
    curvature  finite-difference curvature and quadrature on chart metrics
    models     model manifolds with a tubular neighbourhood of W
    bending    the bending curve and the bent hypersurface M^gamma
    homotopy   metric homotopies and the stretched product metric
    yamabe     gluing bounds for Yamabe invariants
    pipeline   end-to-end runs, reports and curve export
"""
__version__ = "0.1.0"
