"""Exponential map of ``G^P`` and its local inverse by shooting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .geodesic import BoundaryReached, integrate_geodesic
from .grid import TensorField
from .operators import OperatorSpec, SolveContext, SolverError

__all__ = ["exp_map", "log_map", "ShootingReport", "ShootingError", "flat_norm"]


class ShootingError(RuntimeError):
    """The shooting iteration did not converge."""


@dataclass
class ShootingReport:
    iterations: int
    final_residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {"iterations": self.iterations,
                "final_residual": self.final_residual,
                "converged": self.converged}


def flat_norm(m: TensorField) -> float:
    """``L2`` norm of a ``(0,2)`` field against the fixed flat background."""
    return math.sqrt(float(np.sum(m.data ** 2)) * m.grid.cell_volume)


def exp_map(P: OperatorSpec, g0: TensorField, u0: TensorField,
            dt: float = 1e-3, scheme: str = "rk4",
            solve_context: SolveContext | None = None) -> TensorField:
    """Endpoint ``g(1)`` of the geodesic with ``g(0) = g0``, ``g_t(0) = u0``.

    Raises
    ------
    BoundaryReached
        If the geodesic degenerates before ``t = 1``.
    """
    if not np.any(u0.data):
        return g0.copy()
    tr = integrate_geodesic(P, g0, u0, 1.0, dt, scheme,
                            snapshot_every=10 ** 9,
                            solve_context=solve_context)
    if tr.boundary_reached:
        raise BoundaryReached(f"geodesic degenerates at t={tr.final.t:.6g}")
    return tr.final.g


def log_map(P: OperatorSpec, g0: TensorField, g1: TensorField,
            dt: float = 1e-3, scheme: str = "rk4", tol: float = 1e-8,
            max_iter: int = 50, eps: float = 1e-5, max_halvings: int = 20,
            return_report: bool = False):
    """Initial velocity ``u`` with ``exp_map(P, g0, u) = g1``.

    Gauss-Newton shooting: the Jacobian of the exponential map is applied
    through central differences in ``u`` and inverted with GMRES; each
    update is damped by step halving until the mismatch decreases.  The
    mismatch is measured by :func:`flat_norm` and the iteration stops once
    it is below ``tol * flat_norm(g1 - g0)``.

    Returns ``u``, or ``(u, report)`` with ``return_report``.
    """
    grid = g0.grid
    shape = g0.data.shape
    scale = flat_norm(g1 - g0)
    u = (g1 - g0).sym()
    if scale == 0.0:
        report = ShootingReport(0, 0.0, True)
        return (u * 0.0, report) if return_report else u * 0.0

    ctx = SolveContext(P) if P.family == "sobolev" else None

    def shoot(v):
        return exp_map(P, g0, v, dt, scheme, ctx)

    def mismatch(v):
        return shoot(v) - g1

    F = mismatch(u)
    res = flat_norm(F)
    gscale = g0.norm_inf()
    it = 0
    while res > tol * scale:
        if it >= max_iter:
            raise ShootingError(f"no convergence after {max_iter} iterations: "
                                f"relative mismatch {res / scale:.3e}")
        it += 1

        def jvp(x, u=u):
            v = TensorField(grid, x.reshape(shape), "dd").sym()
            vmax = v.norm_inf()
            if vmax == 0.0:
                return np.zeros(x.size)
            e = eps * gscale / vmax
            d = (shoot(u + v * e) - shoot(u - v * e)) * (0.5 / e)
            return d.data.ravel()

        b = -F.data.ravel()
        J = LinearOperator((b.size, b.size), matvec=jvp)
        # inexact Newton: the inner tolerance follows the outer mismatch but
        # need not go below what the outer tolerance asks for
        rtol = min(0.1, max(0.1 * tol * scale / res, res / scale))
        x, _ = gmres(J, b, rtol=rtol, atol=0.0, restart=40,
                     maxiter=2)
        du = TensorField(grid, x.reshape(shape), "dd").sym()
        step = 1.0
        for _ in range(max_halvings + 1):
            try:
                F_new = mismatch(u + du * step)
                res_new = flat_norm(F_new)
            except (BoundaryReached, SolverError, FloatingPointError, ValueError):
                res_new = math.inf
            if res_new < res:
                break
            step *= 0.5
        else:
            raise ShootingError("line search failed to reduce the mismatch")
        u = u + du * step
        F, res = F_new, res_new
    report = ShootingReport(it, res / scale, True)
    return (u, report) if return_report else u
