"""Geodesic equation of ``G^P`` in momentum form, RK4 integration, monitors.

The state is ``(g, h)`` with ``h = P_g g_t``; ``g_t = P_g^{-1} h`` and ``h_t``
is given by the five-term flow field of :func:`flow_field`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from .grid import Grid, TensorField, min_eigenvalue
from .io import dumps
from .operators import (OperatorSpec, SolveContext, op_apply, op_derivative,
                        op_derivative_adjoint, op_solve)
from .tensors import Geometry, _geom, matmul

__all__ = [
    "GeodesicState",
    "MonitorRecord",
    "Trajectory",
    "CovectorDensityField",
    "BoundaryReached",
    "gradient_K",
    "gradient_H",
    "flow_field",
    "integrate_geodesic",
    "energy",
    "momentum_density",
    "path_length",
]

SCHEMES = ("rk4", "rk4_adaptive")


class BoundaryReached(RuntimeError):
    """The geodesic left the space of metrics before the requested time."""


@dataclass
class GeodesicState:
    g: TensorField
    h: TensorField
    t: float = 0.0


@dataclass
class MonitorRecord:
    t: float
    energy: float
    momentum_norm_drift: float
    spd_margin: float
    step_size: float

    def to_dict(self) -> dict:
        return {"t": self.t, "energy": self.energy,
                "momentum_drift": self.momentum_norm_drift,
                "spd_margin": self.spd_margin, "step_size": self.step_size}


@dataclass
class CovectorDensityField:
    """One-form ``nabla^* h`` paired with the density ``vol(g)``."""

    covector: TensorField
    density: TensorField

    @property
    def values(self) -> np.ndarray:
        return self.covector.data * self.density.data


@dataclass
class Trajectory:
    states: list
    monitors: list
    operator: OperatorSpec
    grid: Grid
    dt: float
    scheme: str
    boundary_reached: bool = False
    halt_reason: str | None = None

    @property
    def final(self) -> GeodesicState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return np.array([m.t for m in self.monitors])

    def write_jsonl(self, path) -> None:
        """One monitor record per line, each tagged with the package version."""
        with open(path, "w") as fh:
            for rec in self.monitors:
                d = rec.to_dict()
                d["version"] = __version__
                fh.write(dumps(d) + "\n")


def _sym_products(a, gi, b):
    # a g^-1 b, pointwise
    return matmul(a.data, gi, b.data)


def gradient_K(P: OperatorSpec, g, h: TensorField, m: TensorField) -> TensorField:
    """``K_g(h, m)`` with ``D_(g,m) G^P(h, k) = G^P(K_g(h, m), k)``."""
    geo = _geom(g)
    gi = geo.ginv.data
    Ph = op_apply(P, geo, h)
    body = (-_sym_products(m, gi, Ph) - _sym_products(Ph, gi, m)
            + 0.5 * geo.trace_g(m).data * Ph.data)
    rhs = op_derivative(P, geo, m, h) + Ph.like(body)
    return op_solve(P, geo, rhs)


def gradient_H(P: OperatorSpec, g, h: TensorField, k: TensorField) -> TensorField:
    """``H_g(h, k)`` with ``D_(g,m) G^P(h, k) = G^P(m, H_g(h, k))``."""
    geo = _geom(g)
    gi = geo.ginv.data
    Ph = op_apply(P, geo, h)
    body = (-_sym_products(Ph, gi, k) - _sym_products(k, gi, Ph)
            + 0.5 * geo.g.data * geo.inner(Ph, k).data)
    rhs = op_derivative_adjoint(P, geo, h, k) + Ph.like(body)
    return op_solve(P, geo, rhs)


def _flow(P: OperatorSpec, geo: Geometry, h: TensorField,
          x0: TensorField | None = None, context: SolveContext | None = None):
    u = op_solve(P, geo, h, x0, context)
    gi = geo.ginv.data
    dh = (0.5 * op_derivative_adjoint(P, geo, u, u).data
          + 0.25 * geo.g.data * geo.inner(h, u).data
          + 0.5 * _sym_products(u, gi, h) + 0.5 * _sym_products(h, gi, u)
          - 0.5 * geo.trace_g(u).data * h.data)
    dh = h.like(dh).sym()
    return u, dh


def flow_field(P: OperatorSpec, state: GeodesicState):
    """``(g_t, h_t)`` at ``state``."""
    return _flow(P, _geom(state.g), state.h)


def energy(P: OperatorSpec, state: GeodesicState) -> float:
    """``G^P(g_t, g_t) = int g(h, P^-1 h) vol``."""
    geo = _geom(state.g)
    u = op_solve(P, geo, state.h)
    return geo.integrate(state.h, u)


def momentum_density(P: OperatorSpec, state: GeodesicState,
                     derivative: str = "spectral") -> CovectorDensityField:
    """The conserved one-form density ``(nabla^* P g_t) vol(g)``.

    Spectral differentiation is the default: the stencil does not obey the
    chain rule exactly, and its truncation error would otherwise dominate
    the measured drift of geodesics whose equation has no spatial
    derivatives.
    """
    geo = Geometry(state.g, check=False, derivative=derivative)
    return CovectorDensityField(geo.nabla_star(state.h), geo.vol)


def _momentum_data(g: TensorField, h: TensorField) -> np.ndarray:
    geo = Geometry(g, check=False, derivative="spectral")
    return geo.nabla_star(h).data * geo.vol.data


class _Breach(Exception):
    pass


def _integrate(P, g0, h0, T, dt, scheme, spd_floor, local_tol,
               max_halvings, snapshot_every, context=None):
    lam0 = float(min_eigenvalue(g0).min())
    floor = spd_floor * lam0
    grid = g0.grid
    # a context handed in by the caller is shared with other trajectories,
    # so its factors are keyed by stage time
    keyed = context is not None
    ctx = context if keyed else (
        SolveContext(P) if P.family == "sobolev" else None)

    def flow(geo, h, x0, t_stage):
        if keyed:
            ctx.key = round(t_stage, 9)
        return _flow(P, geo, h, x0, ctx)

    def geometry(g):
        if not np.all(np.isfinite(g.data)):
            raise _Breach("non-finite metric")
        lam = float(min_eigenvalue(g).min())
        if not lam > floor:
            raise _Breach("boundary reached")
        return Geometry(g, check=False), lam

    def add(a, da, s):
        return TensorField(grid, a.data + s * da.data, "dd")

    def rk4(g, h, k1, t, step):
        u1, a1 = k1
        g2, _ = geometry(add(g, u1, 0.5 * step))
        u2, a2 = flow(g2, add(h, a1, 0.5 * step), u1, t + 0.5 * step)
        g3, _ = geometry(add(g, u2, 0.5 * step))
        u3, a3 = flow(g3, add(h, a2, 0.5 * step), u2, t + 0.5 * step)
        g4, _ = geometry(add(g, u3, step))
        u4, a4 = flow(g4, add(h, a3, step), u3, t + step)
        w = step / 6.0
        g_new = TensorField(grid, g.data + w * (u1.data + 2 * u2.data
                                                + 2 * u3.data + u4.data), "dd")
        h_new = TensorField(grid, h.data + w * (a1.data + 2 * a2.data
                                                + 2 * a3.data + a4.data), "dd")
        if not (np.all(np.isfinite(g_new.data)) and np.all(np.isfinite(h_new.data))):
            raise _Breach("non-finite state")
        return g_new, h_new

    def step_once(g, h, k1, t, step):
        if scheme == "rk4":
            return rk4(g, h, k1, t, step), 0.0
        coarse = rk4(g, h, k1, t, step)
        gm, hm = rk4(g, h, k1, t, 0.5 * step)
        geo_m, _ = geometry(gm)
        fine = rk4(gm, hm, flow(geo_m, hm, k1[0], t + 0.5 * step),
                   t + 0.5 * step, 0.5 * step)
        # error relative to the local size of each field, so that steps
        # shrink as the metric degenerates
        err = 0.0
        for a, b in zip(fine, coarse):
            size = np.sqrt(np.sum(a.data ** 2, axis=(0, 1)))
            scale = size + 1e-12 * float(size.max()) + 1e-300
            diff = np.sqrt(np.sum((a.data - b.data) ** 2, axis=(0, 1)))
            err = max(err, float(np.max(diff / scale)) / 15.0)
        return fine, err

    g, h, t = g0, h0, 0.0
    geo, lam = geometry(g)
    mu0 = None
    states, monitors = [GeodesicState(g, h, t)], []
    step = dt
    min_step = dt * 2.0 ** (-max_halvings)
    halt = None
    nsteps = 0
    u_prev = None
    while True:
        k1 = flow(geo, h, u_prev, t)
        u_prev = k1[0]
        mu = _momentum_data(g, h)
        if mu0 is None:
            mu0 = mu
            mu0_scale = float(np.max(np.abs(mu0)))
        drift = float(np.max(np.abs(mu - mu0)))
        if mu0_scale > 1e-14:
            drift /= mu0_scale
        monitors.append(MonitorRecord(t, geo.integrate(h, k1[0]), drift,
                                      lam / lam0, step))
        if t >= T - 1e-14 * max(1.0, T) or halt:
            break
        trial = min(step, T - t)
        while True:
            try:
                (g_new, h_new), err = step_once(g, h, k1, t, trial)
                if scheme == "rk4_adaptive" and err > local_tol and trial > min_step:
                    trial *= 0.5
                    continue
                geo_new, lam_new = geometry(g_new)
                break
            except _Breach as exc:
                trial *= 0.5
                if trial < min_step:
                    halt = str(exc)
                    break
        if halt:
            break
        g, h, t = g_new, h_new, t + trial
        geo, lam = geo_new, lam_new
        nsteps += 1
        if scheme == "rk4_adaptive":
            step = min(dt, 2.0 * trial) if err < local_tol / 32.0 else trial
        else:
            step = trial
        if nsteps % snapshot_every == 0 or t >= T - 1e-14 * max(1.0, T):
            states.append(GeodesicState(g, h, t))
    if states[-1].t != t:
        states.append(GeodesicState(g, h, t))
    return states, monitors, halt


def integrate_geodesic(P: OperatorSpec, g0: TensorField, u0: TensorField,
                       T: float, dt: float = 1e-3, scheme: str = "rk4",
                       spd_floor: float = 1e-6, local_tol: float = 1e-8,
                       max_halvings: int = 40, snapshot_every: int | None = None,
                       solve_context: SolveContext | None = None) -> Trajectory:
    """Integrate the geodesic with ``g(0) = g0`` and ``g_t(0) = u0`` up to ``T``.

    Classical RK4 on ``(g, h)``.  When a step would take the metric below
    ``spd_floor`` times its initial minimum eigenvalue the step is halved,
    up to ``max_halvings`` times; after that the integration stops and the
    partial trajectory is returned with ``boundary_reached`` set.

    ``rk4_adaptive`` halves the step whenever the step-doubling estimate of
    the local error exceeds ``local_tol``.

    ``solve_context`` lets several Sobolev trajectories from the same
    starting metric share preconditioner factors.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not dt > 0 or not T >= 0:
        raise ValueError("dt must be positive and T non-negative")
    Geometry(g0)  # validates SPD and conditioning
    h0 = op_apply(P, g0, u0)
    if snapshot_every is None:
        snapshot_every = max(1, math.ceil(T / (100.0 * dt)))
    states, monitors, halt = _integrate(P, g0, h0, T, dt, scheme, spd_floor,
                                        local_tol, max_halvings, snapshot_every,
                                        solve_context)
    return Trajectory(states, monitors, P, g0.grid, dt, scheme,
                      boundary_reached=halt is not None, halt_reason=halt)


def path_length(P: OperatorSpec, trajectory: Trajectory) -> float:
    """Trapezoid rule for ``int sqrt(G^P(g_t, g_t)) dt`` over the monitors."""
    t = trajectory.times
    if len(t) < 2:
        raise ValueError("need at least two states")
    e = np.sqrt(np.maximum([m.energy for m in trajectory.monitors], 0.0))
    return float(np.trapezoid(e, t))
